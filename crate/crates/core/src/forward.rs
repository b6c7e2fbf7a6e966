//! Brownian drivers and coupled forward paths.
//!
//! A [`PathPair`] carries two trajectories driven by the same Brownian path:
//! the scheme under test `X^N` on the coarse grid, and a reference `X` that
//! is either the exact transition (when the SDE admits one) or a fine Euler
//! path with `R` sub-steps per coarse step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExactTransition, Problem};
use crate::rng::NormalStream;

/// Uniform time grid `t_k = k h`, `h = T / N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.h()
        }
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        if !(0.0..self.horizon).contains(&t) {
            return None;
        }
        let k = ((t / self.h()).floor() as usize).min(self.steps - 1);
        // guard against rounding at interval boundaries
        if t < self.t(k) {
            Some(k - 1)
        } else if k + 1 < self.steps && t >= self.t(k + 1) {
            Some(k + 1)
        } else {
            Some(k)
        }
    }
}

/// Brownian increments on a grid refined `R` times; coarse increments are
/// the in-order sums of their `R` fine increments.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    refinement: usize,
    fine: Vec<f64>,
    coarse: Vec<f64>,
}

impl BrownianPath {
    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn fine(&self) -> &[f64] {
        &self.fine
    }

    pub fn coarse(&self) -> &[f64] {
        &self.coarse
    }

    /// Fine increments of coarse interval `k`.
    pub fn fine_in(&self, k: usize) -> &[f64] {
        &self.fine[k * self.refinement..(k + 1) * self.refinement]
    }
}

/// Increments `δW_j = √(h/R) ξ_j` with `ξ_j` the `j`-th variate of the
/// counter-based stream keyed by `(seed, path_id)`.
pub fn sample_brownian(grid: &TimeGrid, refinement: usize, seed: u64, path_id: u64) -> Result<BrownianPath> {
    if refinement == 0 {
        return Err(Error::InvalidArgument("refinement factor must be at least 1".into()));
    }
    let mut fine = vec![0.0; grid.steps() * refinement];
    NormalStream::new(seed, path_id).fill(&mut fine);
    let scale = (grid.h() / refinement as f64).sqrt();
    for v in fine.iter_mut() {
        *v *= scale;
    }
    let coarse = fine
        .chunks_exact(refinement)
        .map(|c| c.iter().fold(0.0, |acc, v| acc + v))
        .collect();
    Ok(BrownianPath {
        refinement,
        fine,
        coarse,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Euler,
    Milstein,
    ExactAbm,
    ExactGbm,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Euler,
        SchemeKind::Milstein,
        SchemeKind::ExactAbm,
        SchemeKind::ExactGbm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::Milstein => "milstein",
            SchemeKind::ExactAbm => "exact-abm",
            SchemeKind::ExactGbm => "exact-gbm",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (euler, milstein, exact-abm, exact-gbm)")))
    }
}

/// One-step forward transition `x' = T(t_k, x, ΔW, h)`, shared by the path
/// simulator and the backward solver's quadrature kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneStepScheme {
    kind: SchemeKind,
}

impl OneStepScheme {
    pub fn new(kind: SchemeKind) -> Self {
        OneStepScheme { kind }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// Checks that the problem provides what the kernel needs.
    pub fn check(&self, problem: &Problem) -> Result<()> {
        let unavailable = |reason| {
            Err(Error::SchemeUnavailable {
                scheme: self.kind.name(),
                problem: problem.id.clone(),
                reason,
            })
        };
        match (self.kind, problem.exact_transition) {
            (SchemeKind::Euler, _) => Ok(()),
            (SchemeKind::Milstein, _) if problem.coefficients.sigma_x.is_none() => {
                unavailable("sigma_x is not provided")
            }
            (SchemeKind::Milstein, _) => Ok(()),
            (SchemeKind::ExactAbm, Some(ExactTransition::ArithmeticBm { .. })) => Ok(()),
            (SchemeKind::ExactGbm, Some(ExactTransition::GeometricBm { .. })) => Ok(()),
            _ => unavailable("the SDE has no matching exact transition"),
        }
    }

    /// Unchecked transition; yields NaN when the kernel does not apply to the
    /// problem (see [`OneStepScheme::check`]).
    #[inline]
    pub fn transition(&self, problem: &Problem, t: f64, x: f64, dw: f64, h: f64) -> f64 {
        let c = &problem.coefficients;
        match self.kind {
            SchemeKind::Euler => x + (c.b)(t, x) * h + (c.sigma)(t, x) * dw,
            SchemeKind::Milstein => {
                let sigma = (c.sigma)(t, x);
                let sigma_x = c.sigma_x.as_ref().map_or(f64::NAN, |sx| sx(t, x));
                x + (c.b)(t, x) * h + sigma * dw + 0.5 * sigma * sigma_x * (dw * dw - h)
            }
            SchemeKind::ExactAbm => match problem.exact_transition {
                Some(e @ ExactTransition::ArithmeticBm { .. }) => e.advance(x, dw, h),
                _ => f64::NAN,
            },
            SchemeKind::ExactGbm => match problem.exact_transition {
                Some(e @ ExactTransition::GeometricBm { .. }) => e.advance(x, dw, h),
                _ => f64::NAN,
            },
        }
    }

    pub fn step(&self, problem: &Problem, t: f64, x: f64, dw: f64, h: f64) -> Result<f64> {
        let next = self.transition(problem, t, x, dw, h);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::BlowUp { t, x })
        }
    }
}

/// Forward simulation settings shared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    /// Fine sub-steps per coarse step for the Brownian path and the fine Euler reference.
    pub refinement: usize,
    /// Reference states retained per coarse interval (at `t_k + l h / L`).
    pub interior: usize,
    pub seed: u64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            refinement: 64,
            interior: 4,
            seed: 20_070_101,
        }
    }
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refinement == 0 || self.interior == 0 {
            return Err(Error::Config("forward.R and forward.L must be positive".into()));
        }
        if self.refinement % self.interior != 0 {
            return Err(Error::Config(format!(
                "forward.L = {} must divide forward.R = {}",
                self.interior, self.refinement
            )));
        }
        Ok(())
    }
}

/// Reference and scheme trajectories on one Brownian path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPair {
    /// `X_{t_k}`, `k = 0..=N`.
    pub reference: Vec<f64>,
    /// `X^N_{t_k}`, `k = 0..=N`.
    pub scheme: Vec<f64>,
    /// `X` at `t_k + l h / L`; entry `k * L + l`.
    pub interior: Vec<f64>,
    pub interior_per_step: usize,
}

impl PathPair {
    pub fn error(&self, k: usize) -> f64 {
        self.scheme[k] - self.reference[k]
    }

    pub fn interior_state(&self, k: usize, l: usize) -> f64 {
        self.interior[k * self.interior_per_step + l]
    }
}

pub fn simulate_pair(
    problem: &Problem,
    grid: &TimeGrid,
    scheme: &OneStepScheme,
    forward: &ForwardConfig,
    path_id: u64,
) -> Result<PathPair> {
    forward.validate()?;
    let path = sample_brownian(grid, forward.refinement, forward.seed, path_id)?;
    simulate_on(problem, grid, scheme, forward.interior, &path)
}

/// Drives both trajectories with a given Brownian path.
pub fn simulate_on(
    problem: &Problem,
    grid: &TimeGrid,
    scheme: &OneStepScheme,
    interior_per_step: usize,
    path: &BrownianPath,
) -> Result<PathPair> {
    let n = grid.steps();
    let h = grid.h();
    let r = path.refinement();
    if interior_per_step == 0 || r % interior_per_step != 0 {
        return Err(Error::InvalidArgument(format!(
            "interior sample count {interior_per_step} must divide the refinement {r}"
        )));
    }
    let stride = r / interior_per_step;
    let x0 = problem.x0();

    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    for k in 0..n {
        let x = states[k];
        states.push(scheme.step(problem, grid.t(k), x, path.coarse()[k], h)?);
    }

    let mut reference = Vec::with_capacity(n + 1);
    let mut interior = Vec::with_capacity(n * interior_per_step);
    reference.push(x0);
    match problem.exact_transition {
        Some(exact) => {
            let sub_h = h / interior_per_step as f64;
            for k in 0..n {
                let xk = reference[k];
                let fine = path.fine_in(k);
                let mut partial = 0.0;
                for l in 0..interior_per_step {
                    if l > 0 {
                        partial = fine[(l - 1) * stride..l * stride]
                            .iter()
                            .fold(partial, |acc, v| acc + v);
                    }
                    interior.push(exact.advance(xk, partial, l as f64 * sub_h));
                }
                let next = exact.advance(xk, path.coarse()[k], h);
                if !next.is_finite() {
                    return Err(Error::BlowUp { t: grid.t(k), x: xk });
                }
                reference.push(next);
            }
        }
        None => {
            let c = &problem.coefficients;
            let dt = h / r as f64;
            let mut x = x0;
            for k in 0..n {
                for (j, dw) in path.fine_in(k).iter().enumerate() {
                    if j % stride == 0 {
                        interior.push(x);
                    }
                    let t = (k * r + j) as f64 * dt;
                    let next = x + (c.b)(t, x) * dt + (c.sigma)(t, x) * dw;
                    if !next.is_finite() {
                        return Err(Error::BlowUp { t, x });
                    }
                    x = next;
                }
                reference.push(x);
            }
        }
    }

    Ok(PathPair {
        reference,
        scheme: states,
        interior,
        interior_per_step,
    })
}
