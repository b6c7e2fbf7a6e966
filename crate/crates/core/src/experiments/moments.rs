//! Increment moments of the true `(X, Y)` over half a time step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::errors::{merge_all, Estimate, Moments, CHUNK, MIN_PATHS};
use super::fit::{fit_loglog, RateFit};
use crate::error::{Error, Result};
use crate::forward::{simulate_pair, ForwardConfig, OneStepScheme, SchemeKind, TimeGrid};
use crate::model::Problem;
use crate::rng::derive_seed;

/// Moments at one step size. Index `p - 1` holds `max_k E|·|^{2p}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub steps: usize,
    pub h: f64,
    pub x: [Estimate; 2],
    pub y: [Estimate; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub name: String,
    pub p: u32,
    pub fit: RateFit,
    pub min_slope: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub problem: String,
    pub paths: usize,
    pub rows: Vec<MomentRow>,
    pub fits: Vec<MomentFit>,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(|f| f.passed)
    }
}

/// Estimates `E|X_s - X_{t_k}|^{2p}` and `E|Y_s - Y_{t_k}|^{2p}` at
/// `s = t_k + h/2` for `p ∈ {1, 2}`, maximized over `k`, on each step count
/// of `ladder`, and fits their slopes against `h`.
///
/// `forward.interior` must be even so that the midpoint is a retained
/// reference state.
pub fn moment_check(problem: &Problem, ladder: &[usize], forward: &ForwardConfig, paths: usize) -> Result<MomentReport> {
    if problem.closed_form.is_none() {
        return Err(Error::NoReferenceSolution(problem.id.clone()));
    }
    if paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_PATHS} paths are needed, got {paths}"
        )));
    }
    forward.validate()?;
    if forward.interior % 2 != 0 {
        return Err(Error::Config(format!(
            "moment checks need an even forward.L, got {}",
            forward.interior
        )));
    }
    let mid = forward.interior / 2;
    let scheme = OneStepScheme::new(SchemeKind::Euler);

    let mut rows = Vec::with_capacity(ladder.len());
    for &n in ladder {
        let grid = TimeGrid::new(problem.horizon(), n)?;
        let fwd = ForwardConfig {
            seed: derive_seed(forward.seed, n as u64),
            ..*forward
        };
        let h = grid.h();
        // slots: x p=1, x p=2, y p=1, y p=2; each of length N
        let chunks: Vec<Result<Vec<Vec<Moments>>>> = (0..paths.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![vec![Moments::default(); n]; 4];
                for path_id in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                    let pair = simulate_pair(problem, &grid, &scheme, &fwd, path_id as u64)?;
                    for k in 0..n {
                        let t = grid.t(k);
                        let s = t + 0.5 * h;
                        let xk = pair.reference[k];
                        let xs = pair.interior_state(k, mid);
                        let dx = (xs - xk) * (xs - xk);
                        let dy = problem.true_solution(s, xs)?.y - problem.true_solution(t, xk)?.y;
                        let dy = dy * dy;
                        acc[0][k].push(dx);
                        acc[1][k].push(dx * dx);
                        acc[2][k].push(dy);
                        acc[3][k].push(dy * dy);
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut total = vec![vec![Moments::default(); n]; 4];
        for chunk in chunks {
            for (t, c) in total.iter_mut().zip(chunk?) {
                merge_all(t, &c);
            }
        }
        let best = |slot: &[Moments]| {
            slot.iter()
                .map(|m| Estimate {
                    value: m.mean(paths),
                    std_error: m.std_error(paths),
                })
                .fold(Estimate { value: 0.0, std_error: 0.0 }, |a, e| if e.value > a.value { e } else { a })
        };
        rows.push(MomentRow {
            steps: n,
            h,
            x: [best(&total[0]), best(&total[1])],
            y: [best(&total[2]), best(&total[3])],
        });
    }

    let mut fits = Vec::with_capacity(4);
    for (name, pick) in [("x", 0usize), ("y", 1)] {
        for p in 1..=2u32 {
            let label = format!("{name}_moment_{}", 2 * p);
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r.h, if pick == 0 { r.x } else { r.y }[p as usize - 1].value))
                .collect();
            let fit = fit_loglog(&label, &pts)?;
            let min_slope = p as f64 - 0.2;
            fits.push(MomentFit {
                passed: fit.slope >= min_slope,
                name: label,
                p,
                fit,
                min_slope,
            });
        }
    }
    Ok(MomentReport {
        problem: problem.id.clone(),
        paths,
        rows,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    #[test]
    fn brownian_scaling() {
        // abm-linear: X = x0 + 0.4 W and Y = X
        let p = builtin("abm-linear").unwrap();
        let fwd = ForwardConfig {
            refinement: 4,
            interior: 2,
            seed: 5,
        };
        let m = 4000;
        let r = moment_check(&p, &[4, 8, 16], &fwd, m).unwrap();
        for row in &r.rows {
            let var = 0.16 * row.h / 2.0;
            // max over N steps of sample means, allow a few standard errors
            assert!((row.x[0].value - var).abs() < 6.0 * row.x[0].std_error, "{row:?}");
            assert!((row.x[1].value - 3.0 * var * var).abs() < 6.0 * row.x[1].std_error);
            assert_eq!(row.x[0], row.y[0]);
        }
        assert!(r.passed(), "{:?}", r.fits);
        assert!((r.fits[0].fit.slope - 1.0).abs() < 0.1);
        assert!((r.fits[1].fit.slope - 2.0).abs() < 0.15);
    }

    #[test]
    fn odd_interior_count_is_rejected() {
        let p = builtin("trig").unwrap();
        let fwd = ForwardConfig {
            refinement: 3,
            interior: 3,
            seed: 1,
        };
        assert!(matches!(moment_check(&p, &[4, 8, 16], &fwd, 100), Err(Error::Config(_))));
    }
}
