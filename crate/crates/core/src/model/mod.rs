//! FBSDE problem definitions.
//!
//! A [`Problem`] bundles the forward coefficients `b`, `sigma`, the driver `f`
//! and the terminal function `phi`. Problems built by [`make_manufactured`]
//! additionally carry a [`ClosedForm`]: a smooth `u` solving the semi-linear
//! PDE
//!
//! ```text
//! u_t + b u_x + ½ σ² u_xx + f(t, x, u, u_x σ) = 0,    u(T, x) = Φ(x),
//! ```
//!
//! so that `Y_t = u(t, X_t)` and `Z_t = u_x σ(t, X_t)` are known exactly.

mod catalog;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use catalog::{builtin, builtin_with, CatalogEntry, ProblemParams, CATALOG};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// `g(y, z)`, the part of a manufactured driver that carries the `(y, z)` dependence.
pub type CouplingFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Default number of diffusion scales on each side of `x0` spanned by the
/// working domain.
pub const DEFAULT_DOMAIN_WIDTH: f64 = 6.0;

#[derive(Clone)]
pub struct Coefficients {
    pub b: SpaceTimeFn,
    pub sigma: SpaceTimeFn,
    /// `∂σ/∂x`; required by the Milstein kernel and by the `Z` expansion.
    pub sigma_x: Option<SpaceTimeFn>,
    pub f: DriverFn,
    pub phi: ScalarFn,
    pub horizon: f64,
    pub x0: f64,
}

/// Analytic solution of the PDE together with the derivatives the error
/// functionals need.
#[derive(Clone)]
pub struct ClosedForm {
    pub u: SpaceTimeFn,
    pub u_t: SpaceTimeFn,
    pub u_x: SpaceTimeFn,
    pub u_xx: SpaceTimeFn,
    pub g: CouplingFn,
}

/// SDEs whose one-step transition is a deterministic function of the
/// Brownian increment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExactTransition {
    /// `dX = mu dt + s dW`
    ArithmeticBm { mu: f64, s: f64 },
    /// `dX = mu X dt + s X dW`
    GeometricBm { mu: f64, s: f64 },
}

impl ExactTransition {
    pub fn tag(&self) -> &'static str {
        match self {
            ExactTransition::ArithmeticBm { .. } => "arithmetic-bm",
            ExactTransition::GeometricBm { .. } => "geometric-bm",
        }
    }

    /// State at `t + h` given the state `x` at `t` and the increment `dw`.
    #[inline]
    pub fn advance(&self, x: f64, dw: f64, h: f64) -> f64 {
        match *self {
            ExactTransition::ArithmeticBm { mu, s } => x + mu * h + s * dw,
            ExactTransition::GeometricBm { mu, s } => x * ((mu - 0.5 * s * s) * h + s * dw).exp(),
        }
    }
}

/// How a problem sizes its working domain `[x_lo, x_hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainRule {
    /// Bounded coefficients: `x0 ± width·sigma_max·√T`, shifted by the drift range.
    Additive {
        sigma_max: f64,
        drift_min: f64,
        drift_max: f64,
    },
    /// Geometric Brownian motion: `width` log-standard-deviations around the
    /// log-drift, mapped back through `exp`.
    Lognormal { mu: f64, s: f64 },
}

impl DomainRule {
    pub fn bounds(&self, x0: f64, horizon: f64, width: f64) -> (f64, f64) {
        let sqrt_t = horizon.sqrt();
        match *self {
            DomainRule::Additive {
                sigma_max,
                drift_min,
                drift_max,
            } => {
                let spread = width * sigma_max * sqrt_t;
                (
                    x0 + (drift_min * horizon).min(0.0) - spread,
                    x0 + (drift_max * horizon).max(0.0) + spread,
                )
            }
            DomainRule::Lognormal { mu, s } => {
                let drift = (mu - 0.5 * s * s) * horizon;
                let spread = width * s * sqrt_t;
                (
                    x0 * (drift.min(0.0) - spread).exp(),
                    x0 * (drift.max(0.0) + spread).exp(),
                )
            }
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub id: String,
    pub description: String,
    /// Which standing hypotheses the problem satisfies or deliberately breaks.
    pub hypotheses: String,
    pub coefficients: Coefficients,
    pub closed_form: Option<ClosedForm>,
    pub exact_transition: Option<ExactTransition>,
    pub domain: DomainRule,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("id", &self.id)
            .field("horizon", &self.coefficients.horizon)
            .field("x0", &self.coefficients.x0)
            .field("closed_form", &self.closed_form.is_some())
            .field("exact_transition", &self.exact_transition)
            .field("domain", &self.domain)
            .finish()
    }
}

/// Values of the exact BSDE solution at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueSolution {
    /// `u(t, x)`
    pub y: f64,
    /// `u_x σ(t, x)`
    pub z: f64,
    /// `u_x(t, x)`, the coefficient of the first-order `Y` error term.
    pub ux: f64,
    /// `∂x(u_x σ) = u_xx σ + u_x σ_x`, the coefficient of the first-order `Z` error term.
    pub zgrad: f64,
}

impl Problem {
    /// Assembles a problem and checks ellipticity on the working domain and,
    /// when present, that the exact-transition tag matches `(b, sigma)`.
    pub fn new(
        id: impl Into<String>,
        coefficients: Coefficients,
        closed_form: Option<ClosedForm>,
        exact_transition: Option<ExactTransition>,
        domain: DomainRule,
    ) -> Result<Self> {
        if !(coefficients.horizon > 0.0 && coefficients.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {}",
                coefficients.horizon
            )));
        }
        let problem = Problem {
            id: id.into(),
            description: String::new(),
            hypotheses: String::new(),
            coefficients,
            closed_form,
            exact_transition,
            domain,
        };
        problem.check_ellipticity()?;
        problem.check_exact_transition()?;
        Ok(problem)
    }

    pub fn with_notes(mut self, description: &str, hypotheses: &str) -> Self {
        self.description = description.to_string();
        self.hypotheses = hypotheses.to_string();
        self
    }

    pub fn horizon(&self) -> f64 {
        self.coefficients.horizon
    }

    pub fn x0(&self) -> f64 {
        self.coefficients.x0
    }

    /// Working domain at the default width.
    pub fn working_domain(&self) -> (f64, f64) {
        self.working_domain_with(DEFAULT_DOMAIN_WIDTH)
    }

    pub fn working_domain_with(&self, width: f64) -> (f64, f64) {
        self.domain.bounds(self.x0(), self.horizon(), width)
    }

    /// `(t, x)` lattice covering `[0, T] × working domain`.
    pub fn lattice(&self, nt: usize, nx: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (lo, hi) = self.working_domain();
        let horizon = self.horizon();
        (0..nt).flat_map(move |i| {
            let t = horizon * i as f64 / (nt - 1).max(1) as f64;
            (0..nx).map(move |j| (t, lo + (hi - lo) * j as f64 / (nx - 1).max(1) as f64))
        })
    }

    fn check_ellipticity(&self) -> Result<()> {
        let sigma = &self.coefficients.sigma;
        for (t, x) in self.lattice(21, 401) {
            let s = sigma(t, x);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Ellipticity { t, x, sigma: s });
            }
        }
        Ok(())
    }

    fn check_exact_transition(&self) -> Result<()> {
        let Some(exact) = self.exact_transition else {
            return Ok(());
        };
        let c = &self.coefficients;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        for (t, x) in self.lattice(5, 41) {
            let (b_expected, s_expected) = match exact {
                ExactTransition::ArithmeticBm { mu, s } => (mu, s),
                ExactTransition::GeometricBm { mu, s } => (mu * x, s * x),
            };
            if !close((c.b)(t, x), b_expected) || !close((c.sigma)(t, x), s_expected) {
                return Err(Error::TransitionMismatch { tag: exact.tag(), x });
            }
        }
        Ok(())
    }

    fn closed(&self) -> Result<&ClosedForm> {
        self.closed_form
            .as_ref()
            .ok_or_else(|| Error::NoReferenceSolution(self.id.clone()))
    }

    fn sigma_x(&self, t: f64, x: f64) -> Result<f64> {
        let sx = self.coefficients.sigma_x.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("problem `{}` does not provide sigma_x", self.id))
        })?;
        Ok(sx(t, x))
    }

    /// `(∂t + L) u + f(t, x, u, u_x σ)` evaluated with the stored analytic derivatives.
    pub fn pde_residual(&self, t: f64, x: f64) -> Result<f64> {
        let cf = self.closed()?;
        let c = &self.coefficients;
        let sigma = (c.sigma)(t, x);
        let ux = (cf.u_x)(t, x);
        let generator = (cf.u_t)(t, x) + (c.b)(t, x) * ux + 0.5 * sigma * sigma * (cf.u_xx)(t, x);
        Ok(generator + (c.f)(t, x, (cf.u)(t, x), ux * sigma))
    }

    pub fn true_solution(&self, t: f64, x: f64) -> Result<TrueSolution> {
        let cf = self.closed()?;
        let sigma = (self.coefficients.sigma)(t, x);
        let ux = (cf.u_x)(t, x);
        Ok(TrueSolution {
            y: (cf.u)(t, x),
            z: ux * sigma,
            ux,
            zgrad: (cf.u_xx)(t, x) * sigma + ux * self.sigma_x(t, x)?,
        })
    }
}

/// Ingredients of a manufactured problem: the chosen solution `u` with its
/// derivatives, the coupling `g`, and the forward coefficients.
#[derive(Clone)]
pub struct ManufacturedSpec {
    pub id: String,
    pub u: SpaceTimeFn,
    pub u_t: SpaceTimeFn,
    pub u_x: SpaceTimeFn,
    pub u_xx: SpaceTimeFn,
    pub g: CouplingFn,
    pub b: SpaceTimeFn,
    pub sigma: SpaceTimeFn,
    pub sigma_x: SpaceTimeFn,
    pub horizon: f64,
    pub x0: f64,
    pub domain: DomainRule,
    pub exact_transition: Option<ExactTransition>,
}

/// Builds the problem whose driver makes `u` an exact PDE solution:
///
/// ```text
/// f(t, x, y, z) = -(u_t + b u_x + ½σ² u_xx)(t, x) - g(u(t, x), u_x σ(t, x)) + g(y, z)
/// Φ(x) = u(T, x)
/// ```
pub fn make_manufactured(spec: ManufacturedSpec) -> Result<Problem> {
    let ManufacturedSpec {
        id,
        u,
        u_t,
        u_x,
        u_xx,
        g,
        b,
        sigma,
        sigma_x,
        horizon,
        x0,
        domain,
        exact_transition,
    } = spec;

    let f: DriverFn = {
        let (u, u_t, u_x, u_xx, g, b, sigma) = (
            u.clone(),
            u_t.clone(),
            u_x.clone(),
            u_xx.clone(),
            g.clone(),
            b.clone(),
            sigma.clone(),
        );
        Arc::new(move |t, x, y, z| {
            let s = sigma(t, x);
            let ux = u_x(t, x);
            let generator = u_t(t, x) + b(t, x) * ux + 0.5 * s * s * u_xx(t, x);
            -generator - g(u(t, x), ux * s) + g(y, z)
        })
    };
    let phi: ScalarFn = {
        let u = u.clone();
        Arc::new(move |x| u(horizon, x))
    };

    Problem::new(
        id,
        Coefficients {
            b,
            sigma,
            sigma_x: Some(sigma_x),
            f,
            phi,
            horizon,
            x0,
        },
        Some(ClosedForm {
            u,
            u_t,
            u_x,
            u_xx,
            g,
        }),
        exact_transition,
        domain,
    )
}
