use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::OneStepScheme;
use crate::model::Problem;
use crate::numerics::QuadratureRule;

/// Uniform grid `lo = x_0 < ... < x_{n-1} = hi`.
///
/// `core` is the part of the grid the forward paths are expected to visit
/// (the problem's working domain); the rest is margin that keeps one-step
/// quadrature targets of core rows inside the tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    lo: f64,
    hi: f64,
    n_pts: usize,
    core: (f64, f64),
}

impl SpatialGrid {
    pub fn new(lo: f64, hi: f64, n_pts: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if n_pts < 4 {
            return Err(Error::InvalidArgument(format!("grid needs at least 4 points, got {n_pts}")));
        }
        Ok(SpatialGrid {
            lo,
            hi,
            n_pts,
            core: (lo, hi),
        })
    }

    /// Smallest uniform grid on `[lo, hi]` whose spacing does not exceed `dx`.
    pub fn covering(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dx}")));
        }
        let cells = ((hi - lo) / dx - 1e-9).ceil().max(3.0) as usize;
        Self::new(lo, hi, cells + 1)
    }

    pub fn with_core(mut self, lo: f64, hi: f64) -> Self {
        self.core = (lo.max(self.lo), hi.min(self.hi));
        self
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n_pts
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn core(&self) -> (f64, f64) {
        self.core
    }

    pub fn in_core(&self, x: f64) -> bool {
        x >= self.core.0 && x <= self.core.1
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n_pts - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_pts {
            self.hi
        } else {
            self.lo + i as f64 * self.dx()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_pts).map(|i| self.point(i))
    }
}

/// Spatial resolution policy: `Δx = min(dx_cap, dx_coeff · N^{-3/4})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRule {
    pub dx_cap: f64,
    pub dx_coeff: f64,
    pub domain_width_sigmas: f64,
}

impl Default for GridRule {
    fn default() -> Self {
        GridRule {
            dx_cap: 0.02,
            dx_coeff: 1.0,
            domain_width_sigmas: crate::model::DEFAULT_DOMAIN_WIDTH,
        }
    }
}

impl GridRule {
    pub fn spacing(&self, steps: usize) -> f64 {
        self.dx_cap.min(self.dx_coeff * (steps as f64).powf(-0.75))
    }
}

/// Grid covering the problem's working domain plus the reach of one
/// transition step from any core point at the extreme quadrature nodes.
pub fn build_grid(
    problem: &Problem,
    rule: &GridRule,
    steps: usize,
    scheme: &OneStepScheme,
    quad: &QuadratureRule,
) -> Result<SpatialGrid> {
    let (core_lo, core_hi) = problem.working_domain_with(rule.domain_width_sigmas);
    let h = problem.horizon() / steps as f64;
    let reach = quad.max_node() * h.sqrt();
    let (mut lo, mut hi) = (core_lo, core_hi);
    const SAMPLES: usize = 200;
    for k in 0..=8 {
        let t = problem.horizon() * k as f64 / 8.0;
        for i in 0..=SAMPLES {
            let x = core_lo + (core_hi - core_lo) * i as f64 / SAMPLES as f64;
            for dw in [-reach, reach] {
                let y = scheme.transition(problem, t, x, dw, h);
                if y.is_finite() {
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
        }
    }
    let dx = rule.spacing(steps);
    // slack for the sampled extremum
    let slack = 2.0 * dx;
    let lo = if lo < core_lo { lo - slack } else { lo };
    let hi = if hi > core_hi { hi + slack } else { hi };
    Ok(SpatialGrid::covering(lo, hi, dx)?.with_core(core_lo, core_hi))
}
