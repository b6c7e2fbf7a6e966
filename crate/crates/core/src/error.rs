use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("problem `{0}` has no reference solution")]
    NoReferenceSolution(String),

    #[error("unknown problem `{id}`; valid ids: {valid}")]
    UnknownProblem { id: String, valid: String },

    #[error("ellipticity violated: sigma({t}, {x}) = {sigma}")]
    Ellipticity { t: f64, x: f64, sigma: f64 },

    #[error("exact transition `{tag}` does not match the coefficients at x = {x}")]
    TransitionMismatch { tag: &'static str, x: f64 },

    #[error("scheme `{scheme}` is not available for problem `{problem}`: {reason}")]
    SchemeUnavailable {
        scheme: &'static str,
        problem: String,
        reason: &'static str,
    },

    #[error("blow-up: non-finite state after stepping from t = {t}, x = {x}")]
    BlowUp { t: f64, x: f64 },

    #[error("non-finite dynamic-programming value at step {k}, grid index {i}")]
    NonFiniteRow { k: usize, i: usize },

    #[error("quadrature order {0} outside 1..=64")]
    QuadratureOrder(usize),

    #[error("integrand is not finite at node {0}")]
    NonFiniteIntegrand(f64),

    #[error("metric `{metric}` has a non-positive value {value}")]
    NonPositive { metric: String, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by the
    /// inputs (blow-ups, non-finite tables).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. } | Error::NonFiniteRow { .. } | Error::NonFiniteIntegrand(_)
        )
    }
}
