//! Monte Carlo estimates of the discretization error functionals along
//! coupled paths.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward::DiscreteSolution;
use crate::error::{Error, Result};
use crate::forward::{simulate_pair, ForwardConfig};
use crate::model::Problem;

/// Paths per work unit. Reductions happen within a chunk in path order and
/// then across chunks in chunk order, so results do not depend on the
/// number of workers.
pub(crate) const CHUNK: usize = 256;

pub const MIN_PATHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    /// `max_k (E|ΔX_k|²)^{1/2}`
    #[serde(rename = "euler_strong")]
    EulerStrong,
    /// `max_k E|ΔY_k|`
    #[serde(rename = "y_err_1")]
    YErr1,
    /// `max_k (E|ΔY_k|²)^{1/2}`
    #[serde(rename = "y_err_2")]
    YErr2,
    /// `E (Σ_k ∫ |Z^N_{t_k} - Z_t|² dt)^{1/2}`
    #[serde(rename = "z_int_1")]
    ZInt1,
    /// `(E Σ_k ∫ |Z^N_{t_k} - Z_t|² dt)^{1/2}`
    #[serde(rename = "z_int_2")]
    ZInt2,
    /// `max_k E|ΔY_k| + E (Σ ∫ |ΔZ|²)^{1/2}`
    #[serde(rename = "e_1")]
    E1,
    /// `(max_k E|ΔY_k|² + E Σ ∫ |ΔZ|²)^{1/2}`
    #[serde(rename = "e_2")]
    E2,
    /// `max_k E|ΔY_k - u_x(t_k, X_{t_k}) ΔX_k|`
    #[serde(rename = "y_resid")]
    YResid,
    /// `max_k E|ΔZ_k - (u_xx σ + u_x σ_x)(t_k, X_{t_k}) ΔX_k|`
    #[serde(rename = "z_resid")]
    ZResid,
    /// `|Y^N_0 - Y_0|`
    #[serde(rename = "y0_err")]
    Y0Err,
    /// `|Z^N_0 - Z_0|`
    #[serde(rename = "z0_err")]
    Z0Err,
    /// `|u^N(0, x0) - u(0, x0)|`
    #[serde(rename = "uN_gap")]
    UnGap,
    /// `(E h Σ_k |ΔZ_k|²)^{1/2}`, auxiliary
    #[serde(rename = "z_sum_sq")]
    ZSumSq,
}

impl Metric {
    pub const ALL: [Metric; 13] = [
        Metric::EulerStrong,
        Metric::YErr1,
        Metric::YErr2,
        Metric::ZInt1,
        Metric::ZInt2,
        Metric::E1,
        Metric::E2,
        Metric::YResid,
        Metric::ZResid,
        Metric::Y0Err,
        Metric::Z0Err,
        Metric::UnGap,
        Metric::ZSumSq,
    ];

    /// Metrics reported by the `expansion` command.
    pub const RESIDUALS: [Metric; 5] = [
        Metric::YResid,
        Metric::ZResid,
        Metric::Y0Err,
        Metric::Z0Err,
        Metric::UnGap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::EulerStrong => "euler_strong",
            Metric::YErr1 => "y_err_1",
            Metric::YErr2 => "y_err_2",
            Metric::ZInt1 => "z_int_1",
            Metric::ZInt2 => "z_int_2",
            Metric::E1 => "e_1",
            Metric::E2 => "e_2",
            Metric::YResid => "y_resid",
            Metric::ZResid => "z_resid",
            Metric::Y0Err => "y0_err",
            Metric::Z0Err => "z0_err",
            Metric::UnGap => "uN_gap",
            Metric::ZSumSq => "z_sum_sq",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub steps: usize,
    pub paths: usize,
    pub metrics: BTreeMap<Metric, Estimate>,
    /// Fraction of quadrature targets from working-domain rows that needed
    /// extrapolation during the backward solve.
    pub extrapolated_fraction: f64,
}

impl ErrorReport {
    pub fn get(&self, metric: Metric) -> Option<Estimate> {
        self.metrics.get(&metric).copied()
    }

    pub fn value(&self, metric: Metric) -> f64 {
        self.metrics[&metric].value
    }
}

/// Running sums for a sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    #[inline]
    pub(crate) fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub(crate) fn mean(&self, n: usize) -> f64 {
        self.sum / n as f64
    }

    pub(crate) fn std_error(&self, n: usize) -> f64 {
        let nf = n as f64;
        let mean = self.sum / nf;
        let var = ((self.sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    }
}

pub(crate) fn merge_all(dst: &mut [Moments], src: &[Moments]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.merge(s);
    }
}

#[derive(Clone, Debug)]
struct Accumulator {
    dx_sq: Vec<Moments>,
    dy_abs: Vec<Moments>,
    dy_sq: Vec<Moments>,
    y_res: Vec<Moments>,
    z_res: Vec<Moments>,
    z_int_half: Moments,
    z_int: Moments,
    z_sum_sq: Moments,
}

impl Accumulator {
    fn new(steps: usize) -> Self {
        Accumulator {
            dx_sq: vec![Moments::default(); steps + 1],
            dy_abs: vec![Moments::default(); steps + 1],
            dy_sq: vec![Moments::default(); steps + 1],
            y_res: vec![Moments::default(); steps + 1],
            z_res: vec![Moments::default(); steps],
            z_int_half: Moments::default(),
            z_int: Moments::default(),
            z_sum_sq: Moments::default(),
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        merge_all(&mut self.dx_sq, &other.dx_sq);
        merge_all(&mut self.dy_abs, &other.dy_abs);
        merge_all(&mut self.dy_sq, &other.dy_sq);
        merge_all(&mut self.y_res, &other.y_res);
        merge_all(&mut self.z_res, &other.z_res);
        self.z_int_half.merge(&other.z_int_half);
        self.z_int.merge(&other.z_int);
        self.z_sum_sq.merge(&other.z_sum_sq);
    }
}

/// `max_k` of the per-step means, with the standard error at the maximizer.
fn max_mean(per_step: &[Moments], n: usize) -> Estimate {
    per_step
        .iter()
        .map(|m| Estimate {
            value: m.mean(n),
            std_error: m.std_error(n),
        })
        .fold(
            Estimate {
                value: 0.0,
                std_error: 0.0,
            },
            |best, e| if e.value > best.value { e } else { best },
        )
}

/// `sqrt` of an estimate, propagating the error to first order.
fn sqrt_estimate(e: Estimate) -> Estimate {
    let value = e.value.max(0.0).sqrt();
    Estimate {
        value,
        std_error: if value > 0.0 { e.std_error / (2.0 * value) } else { 0.0 },
    }
}

/// Estimates the error functionals of `sol` against the problem's closed
/// form on `paths` coupled path pairs.
///
/// Per-step expectations are path averages; maxima over `k` are taken after
/// averaging. The `Z` integral on each interval is a left Riemann sum over the
/// `L` reference states retained per interval.
pub fn estimate_errors(
    problem: &Problem,
    sol: &DiscreteSolution,
    forward: &ForwardConfig,
    paths: usize,
) -> Result<ErrorReport> {
    if problem.closed_form.is_none() {
        return Err(Error::NoReferenceSolution(problem.id.clone()));
    }
    if paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_PATHS} paths are needed for standard errors, got {paths}"
        )));
    }
    forward.validate()?;
    let grid = sol.grid;
    let steps = grid.steps();
    let h = grid.h();
    let lcount = forward.interior;
    let sub_h = h / lcount as f64;

    let chunks: Vec<Result<Accumulator>> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(steps);
            for path_id in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let pair = simulate_pair(problem, &grid, &sol.scheme, forward, path_id as u64)?;
                let mut z_int = 0.0;
                let mut z_sum_sq = 0.0;
                for k in 0..=steps {
                    let t = grid.t(k);
                    let x = pair.reference[k];
                    let xn = pair.scheme[k];
                    let dx = xn - x;
                    let truth = problem.true_solution(t, x)?;
                    let dy = sol.eval_y(k, xn) - truth.y;
                    acc.dx_sq[k].push(dx * dx);
                    acc.dy_abs[k].push(dy.abs());
                    acc.dy_sq[k].push(dy * dy);
                    acc.y_res[k].push((dy - truth.ux * dx).abs());
                    if k < steps {
                        let zn = sol.eval_z(k, xn);
                        let dz = zn - truth.z;
                        acc.z_res[k].push((dz - truth.zgrad * dx).abs());
                        z_sum_sq += h * dz * dz;
                        z_int += sub_h * dz * dz;
                        for l in 1..lcount {
                            let s = t + l as f64 * sub_h;
                            let zs = problem.true_solution(s, pair.interior_state(k, l))?.z;
                            z_int += sub_h * (zn - zs) * (zn - zs);
                        }
                    }
                }
                acc.z_int_half.push(z_int.sqrt());
                acc.z_int.push(z_int);
                acc.z_sum_sq.push(z_sum_sq);
            }
            Ok(acc)
        })
        .collect();

    let mut total = Accumulator::new(steps);
    for chunk in chunks {
        total.merge(&chunk?);
    }
    let n = paths;

    let mut metrics = BTreeMap::new();
    let y_abs = max_mean(&total.dy_abs, n);
    let y_sq = max_mean(&total.dy_sq, n);
    let z_half = Estimate {
        value: total.z_int_half.mean(n),
        std_error: total.z_int_half.std_error(n),
    };
    let z_full = Estimate {
        value: total.z_int.mean(n),
        std_error: total.z_int.std_error(n),
    };
    metrics.insert(Metric::EulerStrong, sqrt_estimate(max_mean(&total.dx_sq, n)));
    metrics.insert(Metric::YErr1, y_abs);
    metrics.insert(Metric::YErr2, sqrt_estimate(y_sq));
    metrics.insert(Metric::ZInt1, z_half);
    metrics.insert(Metric::ZInt2, sqrt_estimate(z_full));
    metrics.insert(
        Metric::E1,
        Estimate {
            value: y_abs.value + z_half.value,
            std_error: y_abs.std_error.hypot(z_half.std_error),
        },
    );
    metrics.insert(
        Metric::E2,
        sqrt_estimate(Estimate {
            value: y_sq.value + z_full.value,
            std_error: y_sq.std_error.hypot(z_full.std_error),
        }),
    );
    metrics.insert(Metric::YResid, max_mean(&total.y_res, n));
    metrics.insert(Metric::ZResid, max_mean(&total.z_res, n));

    let x0 = problem.x0();
    let truth0 = problem.true_solution(0.0, x0)?;
    let exact = |value: f64| Estimate {
        value,
        std_error: 0.0,
    };
    let gap = (sol.eval_y(0, x0) - truth0.y).abs();
    metrics.insert(Metric::Y0Err, exact(gap));
    metrics.insert(Metric::UnGap, exact(gap));
    metrics.insert(Metric::Z0Err, exact((sol.eval_z(0, x0) - truth0.z).abs()));
    metrics.insert(
        Metric::ZSumSq,
        sqrt_estimate(Estimate {
            value: total.z_sum_sq.mean(n),
            std_error: total.z_sum_sq.std_error(n),
        }),
    );

    Ok(ErrorReport {
        steps,
        paths,
        metrics,
        extrapolated_fraction: sol.diagnostics.core_extrapolated_fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::dp_solve;
    use crate::forward::{OneStepScheme, SchemeKind, TimeGrid};
    use crate::model::builtin;
    use crate::numerics::{build_grid, gauss_hermite, GridRule};

    fn run(id: &str, kind: SchemeKind, n: usize, paths: usize) -> ErrorReport {
        let p = builtin(id).unwrap();
        let scheme = OneStepScheme::new(kind);
        let rule = gauss_hermite(20).unwrap();
        let spatial = build_grid(&p, &GridRule::default(), n, &scheme, &rule).unwrap();
        let grid = TimeGrid::new(p.horizon(), n).unwrap();
        let sol = dp_solve(&p, &grid, &scheme, &rule, &spatial).unwrap();
        let fwd = ForwardConfig {
            refinement: 8,
            interior: 4,
            seed: 17,
        };
        estimate_errors(&p, &sol, &fwd, paths).unwrap()
    }

    #[test]
    fn abm_linear_is_exact() {
        let r = run("abm-linear", SchemeKind::Euler, 8, 200);
        for (m, e) in &r.metrics {
            assert!(e.value < 1e-8, "{m}: {}", e.value);
            assert!(e.value >= 0.0 && e.std_error >= 0.0);
        }
    }

    #[test]
    fn discount_errors_are_deterministic() {
        let r = run("discount", SchemeKind::Euler, 4, 100);
        // max_k |0.975^{4-k} - e^{-0.1(1-k/4)}|, attained at k = 0
        let expect = 0.001_149_527_410_959_573;
        assert!((r.value(Metric::YErr1) - expect).abs() < 1e-12);
        assert!((r.value(Metric::YErr2) - expect).abs() < 1e-12);
        assert!(r.get(Metric::YErr1).unwrap().std_error < 1e-12);
        assert!((r.value(Metric::Y0Err) - expect).abs() < 1e-12);
        assert_eq!(r.value(Metric::EulerStrong), 0.0);
    }

    #[test]
    fn trig_errors_are_positive_and_resolved() {
        let r = run("trig", SchemeKind::Euler, 16, 2000);
        let e2 = r.get(Metric::E2).unwrap();
        assert!(e2.value > 0.0 && e2.value.is_finite());
        assert!(e2.std_error < 0.05 * e2.value);
        assert!(r.value(Metric::EulerStrong) > 0.0);
        assert!(r.extrapolated_fraction < 1e-3);
    }

    #[test]
    fn rejects_small_samples_and_missing_reference() {
        let p = builtin("trig").unwrap();
        let scheme = OneStepScheme::new(SchemeKind::Euler);
        let rule = gauss_hermite(8).unwrap();
        let spatial = build_grid(&p, &GridRule::default(), 4, &scheme, &rule).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let sol = dp_solve(&p, &grid, &scheme, &rule, &spatial).unwrap();
        let fwd = ForwardConfig::default();
        assert!(estimate_errors(&p, &sol, &fwd, 99).is_err());
        let mut bare = p.clone();
        bare.closed_form = None;
        assert!(matches!(estimate_errors(&bare, &sol, &fwd, 100), Err(Error::NoReferenceSolution(_))));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
