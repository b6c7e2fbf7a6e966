//! Backward dynamic programming for `(Y^N, Z^N)`.
//!
//! Starting from `u^N(t_N, ·) = Φ`, each step computes on every grid point
//!
//! ```text
//! z^N(t_k, x) = E[ u^N(t_{k+1}, X') ΔW ] / h
//! u^N(t_k, x) = E[ u^N(t_{k+1}, X') ] + h E[ f(t_k, x, u^N(t_{k+1}, X'), z^N(t_k, x)) ]
//! ```
//!
//! where `X'` is the one-step transition from `x` and the expectations over
//! `ΔW = √h ξ` use Gauss–Hermite quadrature. The scheme is explicit: `f`
//! sees `Y^N` at `t_{k+1}` and the already computed `Z^N` at `t_k`.
//! `Y^N_{t_k} = u^N(t_k, X^N_{t_k})`, `Z^N_{t_k} = z^N(t_k, X^N_{t_k})`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{OneStepScheme, SchemeKind, TimeGrid};
use crate::model::Problem;
use crate::numerics::{Interpolant, QuadratureRule, SpatialGrid};

/// Counts of quadrature targets that fell outside the spatial grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub targets: u64,
    pub extrapolated: u64,
    /// Targets issued from rows inside the working domain.
    pub core_targets: u64,
    pub core_extrapolated: u64,
}

impl Diagnostics {
    fn absorb(&mut self, other: &Diagnostics) {
        self.targets += other.targets;
        self.extrapolated += other.extrapolated;
        self.core_targets += other.core_targets;
        self.core_extrapolated += other.core_extrapolated;
    }

    pub fn extrapolated_fraction(&self) -> f64 {
        self.extrapolated as f64 / self.targets.max(1) as f64
    }

    pub fn core_extrapolated_fraction(&self) -> f64 {
        self.core_extrapolated as f64 / self.core_targets.max(1) as f64
    }
}

/// Rows of `u^N(t_k, ·)` and `z^N(t_k, ·)` on the grid points.
#[derive(Clone, Debug)]
pub struct StepRows {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub grid: TimeGrid,
    pub spatial: SpatialGrid,
    pub scheme: OneStepScheme,
    /// `u^N(t_k, ·)`, `k = 0..=N`
    pub y_tables: Vec<Interpolant>,
    /// `z^N(t_k, ·)`, `k = 0..N`
    pub z_tables: Vec<Interpolant>,
    pub diagnostics: Diagnostics,
}

/// Largest quadrature order handled without heap allocation per row.
const STACK_NODES: usize = crate::numerics::MAX_ORDER;

/// Conditional expectations over one step of length `dt` from `x`, where
/// `next(ξ)` is the state reached with `ΔW = √dt ξ`. Returns `(y, z, extrapolated)`.
#[inline]
fn one_step<F, N>(
    rule: &QuadratureRule,
    y_next: &Interpolant,
    dt: f64,
    next: N,
    driver: F,
) -> (f64, f64, u64)
where
    N: Fn(f64) -> f64,
    F: Fn(f64, f64) -> f64,
{
    let mut values = [0.0; STACK_NODES];
    let sqrt_dt = dt.sqrt();
    let (mut ey, mut ez, mut outside) = (0.0, 0.0, 0u64);
    for (j, (&xi, &w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
        let (v, out) = y_next.eval_flagged(next(sqrt_dt * xi));
        values[j] = v;
        ey += w * v;
        ez += w * v * xi;
        outside += out as u64;
    }
    let z = ez / sqrt_dt;
    let ef: f64 = rule
        .weights()
        .iter()
        .zip(&values)
        .map(|(&w, &v)| w * driver(v, z))
        .sum();
    (ey + dt * ef, z, outside)
}

/// One backward step from `y_next = u^N(t_{k+1}, ·)`.
#[allow(clippy::too_many_arguments)]
pub fn dp_step(
    problem: &Problem,
    scheme: &OneStepScheme,
    rule: &QuadratureRule,
    y_next: &Interpolant,
    spatial: &SpatialGrid,
    k: usize,
    t_k: f64,
    h: f64,
) -> Result<StepRows> {
    if y_next.grid() != spatial {
        return Err(Error::InvalidArgument("y_next must live on the solver's spatial grid".into()));
    }
    let f = &problem.coefficients.f;
    let rows: Vec<(f64, f64, u64)> = (0..spatial.len())
        .into_par_iter()
        .map(|i| {
            let x = spatial.point(i);
            one_step(
                rule,
                y_next,
                h,
                |dw| scheme.transition(problem, t_k, x, dw, h),
                |v, z| f(t_k, x, v, z),
            )
        })
        .collect();

    let n = spatial.len();
    let mut out = StepRows {
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        diagnostics: Diagnostics::default(),
    };
    let per_row = rule.order() as u64;
    for (i, (y, z, outside)) in rows.into_iter().enumerate() {
        if !(y.is_finite() && z.is_finite()) {
            return Err(Error::NonFiniteRow { k, i });
        }
        out.y.push(y);
        out.z.push(z);
        let d = &mut out.diagnostics;
        d.targets += per_row;
        d.extrapolated += outside;
        if spatial.in_core(spatial.point(i)) {
            d.core_targets += per_row;
            d.core_extrapolated += outside;
        }
    }
    Ok(out)
}

pub fn dp_solve(
    problem: &Problem,
    grid: &TimeGrid,
    scheme: &OneStepScheme,
    rule: &QuadratureRule,
    spatial: &SpatialGrid,
) -> Result<DiscreteSolution> {
    scheme.check(problem)?;
    if (grid.horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon() {
        return Err(Error::InvalidArgument(format!(
            "time grid horizon {} differs from the problem horizon {}",
            grid.horizon(),
            problem.horizon()
        )));
    }
    let n = grid.steps();
    let h = grid.h();
    let phi = &problem.coefficients.phi;
    let terminal = Interpolant::new(*spatial, spatial.points().map(|x| phi(x)).collect())?;

    let mut y_tables = vec![terminal];
    let mut z_tables = Vec::with_capacity(n);
    let mut diagnostics = Diagnostics::default();
    for k in (0..n).rev() {
        let rows = dp_step(problem, scheme, rule, y_tables.last().unwrap(), spatial, k, grid.t(k), h)?;
        diagnostics.absorb(&rows.diagnostics);
        y_tables.push(Interpolant::new(*spatial, rows.y)?);
        z_tables.push(Interpolant::new(*spatial, rows.z)?);
    }
    y_tables.reverse();
    z_tables.reverse();
    Ok(DiscreteSolution {
        grid: *grid,
        spatial: *spatial,
        scheme: *scheme,
        y_tables,
        z_tables,
        diagnostics,
    })
}

impl DiscreteSolution {
    /// `u^N(t_k, x)`, `k = 0..=N`.
    #[inline]
    pub fn eval_y(&self, k: usize, x: f64) -> f64 {
        self.y_tables[k].eval(x)
    }

    /// `z^N(t_k, x)`, `k = 0..N`.
    #[inline]
    pub fn eval_z(&self, k: usize, x: f64) -> f64 {
        self.z_tables[k].eval(x)
    }

    /// `(u^N(t_k, x), z^N(t_k, x))`; `z` has no value at the terminal step.
    pub fn eval_solution(&self, k: usize, x: f64) -> Result<(f64, f64)> {
        if k >= self.grid.steps() {
            return Err(Error::InvalidArgument(format!(
                "z^N is defined for k < {}, got k = {k}",
                self.grid.steps()
            )));
        }
        Ok((self.eval_y(k, x), self.eval_z(k, x)))
    }

    /// `(Y^N_t, Z^N_t)` between grid times, one partial step of length
    /// `δ = t_{k+1} - t` back from the table at `t_{k+1}`; `f` is evaluated at
    /// time `t`.
    ///
    /// `x_t` is `X^N_t`. With the Euler kernel the continuation keeps the
    /// coefficients frozen at `(t_k, x_anchor)` where `x_anchor = X^N_{t_k}`;
    /// the other kernels restart from `(t, x_t)` over the remaining `δ`.
    pub fn eval_between(
        &self,
        problem: &Problem,
        rule: &QuadratureRule,
        t: f64,
        x_t: f64,
        x_anchor: f64,
    ) -> Result<(f64, f64)> {
        let k = self
            .grid
            .interval_of(t)
            .ok_or_else(|| Error::InvalidArgument(format!("t = {t} outside [0, {})", self.grid.horizon())))?;
        let t_k = self.grid.t(k);
        let dt = self.grid.t(k + 1) - t;
        let c = &problem.coefficients;
        let f = &c.f;
        let y_next = &self.y_tables[k + 1];
        let (y, z, _) = match self.scheme.kind() {
            SchemeKind::Euler => {
                let drift = (c.b)(t_k, x_anchor) * dt;
                let sigma = (c.sigma)(t_k, x_anchor);
                one_step(rule, y_next, dt, |dw| x_t + drift + sigma * dw, |v, z| f(t, x_t, v, z))
            }
            _ => one_step(
                rule,
                y_next,
                dt,
                |dw| self.scheme.transition(problem, t, x_t, dw, dt),
                |v, z| f(t, x_t, v, z),
            ),
        };
        Ok((y, z))
    }

    /// Writes the tables as text: `#`-prefixed header lines (problem id,
    /// scheme, N, T, grid parameters) followed by CSV rows `k,x,y,z`; `z` is
    /// empty at `k = N`.
    pub fn write_table(&self, problem_id: &str, mut out: impl Write) -> Result<()> {
        writeln!(out, "# fbsde-lab solution table")?;
        writeln!(out, "# problem={problem_id}")?;
        writeln!(out, "# scheme={}", self.scheme.kind())?;
        writeln!(out, "# N={}", self.grid.steps())?;
        writeln!(out, "# T={:e}", self.grid.horizon())?;
        writeln!(out, "# grid.lo={:e}", self.spatial.lo())?;
        writeln!(out, "# grid.hi={:e}", self.spatial.hi())?;
        writeln!(out, "# grid.n_pts={}", self.spatial.len())?;
        writeln!(out, "k,x,y,z")?;
        for (k, table) in self.y_tables.iter().enumerate() {
            for (i, (x, y)) in self.spatial.points().zip(table.values()).enumerate() {
                match self.z_tables.get(k) {
                    Some(z) => writeln!(out, "{k},{x:e},{y:e},{:e}", z.values()[i])?,
                    None => writeln!(out, "{k},{x:e},{y:e},")?,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::numerics::{build_grid, gauss_hermite, GridRule};

    fn solve(id: &str, kind: SchemeKind, n: usize) -> (Problem, DiscreteSolution) {
        let p = builtin(id).unwrap();
        let scheme = OneStepScheme::new(kind);
        let rule = gauss_hermite(20).unwrap();
        let spatial = build_grid(&p, &GridRule::default(), n, &scheme, &rule).unwrap();
        let grid = TimeGrid::new(p.horizon(), n).unwrap();
        let sol = dp_solve(&p, &grid, &scheme, &rule, &spatial).unwrap();
        (p, sol)
    }

    #[test]
    fn constant_terminal_with_zero_driver() {
        let mut p = builtin("abm-linear").unwrap();
        p.coefficients.phi = std::sync::Arc::new(|_| 3.0);
        let rule = gauss_hermite(20).unwrap();
        let scheme = OneStepScheme::new(SchemeKind::Euler);
        let spatial = build_grid(&p, &GridRule::default(), 8, &scheme, &rule).unwrap();
        let next = Interpolant::from_fn(spatial, |_| 3.0).unwrap();
        let rows = dp_step(&p, &scheme, &rule, &next, &spatial, 0, 0.0, 0.125).unwrap();
        assert!(rows.y.iter().all(|y| (y - 3.0).abs() < 1e-12));
        assert!(rows.z.iter().all(|z| z.abs() < 1e-12));
    }

    #[test]
    fn identity_step_gives_sigma() {
        let p = builtin("abm-linear").unwrap();
        let rule = gauss_hermite(20).unwrap();
        let scheme = OneStepScheme::new(SchemeKind::Euler);
        let spatial = build_grid(&p, &GridRule::default(), 8, &scheme, &rule).unwrap();
        let next = Interpolant::from_fn(spatial, |x| x).unwrap();
        let rows = dp_step(&p, &scheme, &rule, &next, &spatial, 3, 0.375, 0.125).unwrap();
        for (i, x) in spatial.points().enumerate() {
            assert!((rows.y[i] - x).abs() < 1e-12);
            assert!((rows.z[i] - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn discount_recursion() {
        let (_, sol) = solve("discount", SchemeKind::Euler, 4);
        let expected = 0.903_687_890_625; // 0.975^4
        for &v in sol.y_tables[0].values() {
            assert!((v - expected).abs() < 1e-12, "{v}");
        }
        for k in 0..4 {
            let (y, z) = sol.eval_solution(k, 0.123).unwrap();
            assert!((y - 0.975f64.powi(4 - k as i32)).abs() < 1e-12);
            assert!(z.abs() < 1e-12);
        }
        assert!(sol.eval_solution(4, 0.0).is_err());
    }

    #[test]
    fn abm_linear_is_reproduced() {
        for kind in [SchemeKind::Euler, SchemeKind::ExactAbm, SchemeKind::Milstein] {
            let (_, sol) = solve("abm-linear", kind, 16);
            for k in 0..16 {
                for x in [-1.3, 0.0, 0.37, 2.1] {
                    let (y, z) = sol.eval_solution(k, x).unwrap();
                    assert!((y - x).abs() < 1e-10 && (z - 0.4).abs() < 1e-10, "{kind} k={k}");
                }
            }
        }
    }

    #[test]
    fn exact_abm_kernel_matches_euler() {
        let (_, a) = solve("abm-linear", SchemeKind::Euler, 8);
        let (_, b) = solve("abm-linear", SchemeKind::ExactAbm, 8);
        for k in 0..=8 {
            assert_eq!(a.y_tables[k].values(), b.y_tables[k].values());
        }
    }

    #[test]
    fn terminal_table_is_phi_at_knots() {
        let (p, sol) = solve("trig", SchemeKind::Euler, 8);
        for (i, x) in sol.spatial.points().enumerate() {
            let phi = (p.coefficients.phi)(x);
            assert_eq!(sol.y_tables[8].values()[i].to_bits(), phi.to_bits());
            assert_eq!(sol.eval_y(8, x).to_bits(), phi.to_bits());
        }
    }

    #[test]
    fn martingale_property_without_driver() {
        // trig coefficients, zero driver, Φ = sin
        let mut p = builtin("trig").unwrap();
        p.coefficients.f = std::sync::Arc::new(|_, _, _, _| 0.0);
        p.coefficients.phi = std::sync::Arc::new(f64::sin);
        let rule = gauss_hermite(20).unwrap();
        let scheme = OneStepScheme::new(SchemeKind::Euler);
        let spatial = build_grid(&p, &GridRule::default(), 16, &scheme, &rule).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let sol = dp_solve(&p, &grid, &scheme, &rule, &spatial).unwrap();
        let h = grid.h();
        for k in 0..16 {
            for (i, x) in spatial.points().enumerate() {
                let expect = rule
                    .integrate(|xi| sol.eval_y(k + 1, scheme.transition(&p, grid.t(k), x, h.sqrt() * xi, h)))
                    .unwrap();
                assert!((sol.y_tables[k].values()[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let (_, a) = solve("trig", SchemeKind::Euler, 16);
        let (_, b) = solve("trig", SchemeKind::Euler, 16);
        for k in 0..16 {
            assert_eq!(a.y_tables[k].values(), b.y_tables[k].values());
            assert_eq!(a.z_tables[k].values(), b.z_tables[k].values());
        }
    }

    #[test]
    fn core_rows_stay_inside_the_grid() {
        for (id, kind) in [
            ("trig", SchemeKind::Euler),
            ("const-sigma", SchemeKind::Euler),
            ("gbm", SchemeKind::ExactGbm),
            ("gbm", SchemeKind::Milstein),
        ] {
            let (_, sol) = solve(id, kind, 8);
            assert!(sol.diagnostics.core_extrapolated_fraction() < 1e-3, "{id}");
        }
    }

    #[test]
    fn between_times() {
        let rule = gauss_hermite(20).unwrap();
        let (p, sol) = solve("trig", SchemeKind::Euler, 8);
        for i in (0..sol.spatial.len()).step_by(37) {
            let x = sol.spatial.point(i);
            for k in [0, 3, 7] {
                let t = sol.grid.t(k);
                let (y, z) = sol.eval_between(&p, &rule, t, x, x).unwrap();
                let (ye, ze) = sol.eval_solution(k, x).unwrap();
                assert!((y - ye).abs() < 1e-12 && (z - ze).abs() < 1e-12);
            }
        }
        assert!(sol.eval_between(&p, &rule, 1.0, 0.0, 0.0).is_err());
        assert!(sol.eval_between(&p, &rule, -0.1, 0.0, 0.0).is_err());

        let (p, sol) = solve("discount", SchemeKind::Euler, 4);
        let (y, z) = sol.eval_between(&p, &rule, 0.3, 0.2, 0.1).unwrap();
        // t = 0.3 lies in [0.25, 0.5): δ = 0.2, N - k - 1 = 2
        let expect = (1.0 - 0.1 * 0.2) * 0.975f64.powi(2);
        assert!((y - expect).abs() < 1e-12 && z.abs() < 1e-12);

        let (p, sol) = solve("abm-linear", SchemeKind::Euler, 8);
        let (y, z) = sol.eval_between(&p, &rule, 0.6, 0.45, 0.3).unwrap();
        assert!((y - 0.45).abs() < 1e-10 && (z - 0.4).abs() < 1e-10);
    }

    #[test]
    fn table_export() {
        let (_, sol) = solve("discount", SchemeKind::Euler, 4);
        let mut buf = Vec::new();
        sol.write_table("discount", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# problem=discount\n# scheme=euler\n# N=4\n"));
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "k,x,y,z");
        assert_eq!(rows.len(), 1 + 5 * sol.spatial.len());
        assert!(rows.last().unwrap().ends_with(','));
    }
}
