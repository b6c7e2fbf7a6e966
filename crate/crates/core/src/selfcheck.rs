//! Fast deterministic consistency checks.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::backward::dp_solve;
use crate::error::Result;
use crate::forward::{OneStepScheme, SchemeKind, TimeGrid};
use crate::model::{builtin, CATALOG};
use crate::numerics::{build_grid, gauss_hermite, GridRule, Interpolant, QuadratureRule, SpatialGrid};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} measured {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfCheckReport {
    pub checks: Vec<Check>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the checks with the default order-20 quadrature rule.
pub fn selfcheck() -> Result<SelfCheckReport> {
    selfcheck_with(&gauss_hermite(20)?)
}

/// Runs the checks using `rule` wherever a quadrature rule is needed.
pub fn selfcheck_with(rule: &QuadratureRule) -> Result<SelfCheckReport> {
    let mut checks = Vec::new();

    let sum: f64 = rule.weights().iter().sum();
    checks.push(Check::at_most("quadrature weight sum", (sum - 1.0).abs(), 1e-14));
    checks.push(Check::at_most("quadrature moments", rule.moment_defect(), 1e-12));
    let lognormal = rule.integrate(|xi| (0.3 * xi).exp())?;
    checks.push(Check::at_most("quadrature E exp(0.3 xi)", (lognormal - 0.045f64.exp()).abs(), 1e-10));
    let mut builtin_defect = 0.0f64;
    for n in 1..=32 {
        builtin_defect = builtin_defect.max(gauss_hermite(n)?.moment_defect());
    }
    checks.push(Check::at_most("quadrature moments n=1..32", builtin_defect, 1e-12));

    let grid = SpatialGrid::covering(-2.4, 2.6, 0.02)?;
    let cubic = |x: f64| ((x - 1.5) * x + 0.25) * x - 2.0;
    let it = Interpolant::from_fn(grid, cubic)?;
    let lin = Interpolant::from_fn(grid, |x| x)?;
    let (mut cubic_err, mut lin_err) = (0.0f64, 0.0f64);
    for k in 0..=4999 {
        let x = -2.4 + 5.0 * k as f64 / 4999.0;
        cubic_err = cubic_err.max((it.eval(x) - cubic(x)).abs());
        lin_err = lin_err.max((lin.eval(x) - x).abs());
    }
    checks.push(Check::at_most("interpolation linear", lin_err, 1e-12));
    checks.push(Check::at_most("interpolation cubic", cubic_err, 1e-10));

    let mut residual = 0.0f64;
    for entry in CATALOG {
        let p = builtin(entry.id)?;
        for (t, x) in p.lattice(50, 50) {
            residual = residual.max(p.pde_residual(t, x)?.abs());
        }
    }
    checks.push(Check::at_most("pde residual (catalog)", residual, 1e-8));

    let euler = OneStepScheme::new(SchemeKind::Euler);
    let grid_rule = GridRule::default();

    let discount = builtin("discount")?;
    let n = 4;
    let spatial = build_grid(&discount, &grid_rule, n, &euler, rule)?;
    let sol = dp_solve(&discount, &TimeGrid::new(discount.horizon(), n)?, &euler, rule, &spatial)?;
    let expected = (1.0 - 0.1 / n as f64).powi(n as i32);
    let gap = sol.y_tables[0]
        .values()
        .iter()
        .map(|v| (v - expected).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("discount (1-rh)^N", gap, 1e-12));

    let linear = builtin("abm-linear")?;
    let n = 8;
    let spatial = build_grid(&linear, &grid_rule, n, &euler, rule)?;
    let sol = dp_solve(&linear, &TimeGrid::new(linear.horizon(), n)?, &euler, rule, &spatial)?;
    let mut worst = 0.0f64;
    for k in 0..n {
        for x in [-1.3, -0.2, 0.0, 0.37, 1.9] {
            let (y, z) = sol.eval_solution(k, x)?;
            worst = worst.max((y - x).abs()).max((z - 0.4).abs());
        }
    }
    checks.push(Check::at_most("abm-linear (y, z) = (x, s)", worst, 1e-10));

    let mut trig = builtin("trig")?;
    let grid_t = TimeGrid::new(trig.horizon(), n)?;
    let spatial = build_grid(&trig, &grid_rule, n, &euler, rule)?;
    let sol = dp_solve(&trig, &grid_t, &euler, rule, &spatial)?;
    let mismatched = sol.spatial.points().enumerate().filter(|&(i, x)| {
        sol.y_tables[n].values()[i].to_bits() != (trig.coefficients.phi)(x).to_bits()
    });
    checks.push(Check::at_most("terminal table = phi (bits)", mismatched.count() as f64, 0.0));

    trig.coefficients.f = Arc::new(|_, _, _, _| 0.0);
    let sol = dp_solve(&trig, &grid_t, &euler, rule, &spatial)?;
    let h = grid_t.h();
    let mut drift = 0.0f64;
    for k in 0..n {
        for (i, x) in spatial.points().enumerate().step_by(7) {
            let expect =
                rule.integrate(|xi| sol.eval_y(k + 1, euler.transition(&trig, grid_t.t(k), x, h.sqrt() * xi, h)))?;
            drift = drift.max((sol.y_tables[k].values()[i] - expect).abs());
        }
    }
    checks.push(Check::at_most("martingale property (f = 0)", drift, 1e-9));

    Ok(SelfCheckReport { checks })
}
