//! Built-in problems with closed-form solutions.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{make_manufactured, DomainRule, ExactTransition, ManufacturedSpec, Problem, SpaceTimeFn};
use crate::error::{Error, Result};

/// Parameter overrides, keyed by bare parameter name (`r`, `s`, ...).
pub type ProblemParams = BTreeMap<String, f64>;

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    pub hypotheses: &'static str,
    pub params: &'static [(&'static str, f64)],
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        id: "trig",
        summary: "u = sin(x+t)e^{-a t}; b = b0, sigma = s0 + s1 sin x, g = gy sin y + gz cos z",
        hypotheses: "bounded smooth coefficients, elliptic state-dependent sigma, nonlinear driver",
        params: &[
            ("a", 0.0),
            ("b0", 0.2),
            ("s0", 0.6),
            ("s1", 0.5),
            ("gy", 0.4),
            ("gz", 0.3),
            ("x0", 0.0),
            ("T", 1.0),
        ],
    },
    CatalogEntry {
        id: "const-sigma",
        summary: "u = sin(x+t)e^{-a t}; b = b1 cos x, sigma = s constant, g = gy sin y + gz cos z",
        hypotheses: "bounded smooth coefficients, sigma independent of x (Euler = Milstein)",
        params: &[
            ("a", 1.0),
            ("b1", 0.3),
            ("s", 0.4),
            ("gy", 0.4),
            ("gz", 0.3),
            ("x0", 0.0),
            ("T", 1.0),
        ],
    },
    CatalogEntry {
        id: "gbm",
        summary: "u = e^{-(T-t)/2} cos x; geometric Brownian motion b = mu x, sigma = s x, g = gy sin y + gz cos z",
        hypotheses: "unbounded coefficients (boundedness deliberately violated); exact transition geometric-bm",
        params: &[
            ("mu", 0.05),
            ("s", 0.25),
            ("gy", 0.4),
            ("gz", 0.3),
            ("x0", 1.0),
            ("T", 1.0),
        ],
    },
    CatalogEntry {
        id: "abm-linear",
        summary: "u = x; arithmetic Brownian motion b = mu, sigma = s, f = -mu",
        hypotheses: "constant coefficients, unbounded linear terminal function; exact transition arithmetic-bm",
        params: &[("mu", 0.0), ("s", 0.4), ("x0", 0.0), ("T", 1.0)],
    },
    CatalogEntry {
        id: "discount",
        summary: "f = -r y, Phi = 1; Y_t = e^{-r(T-t)}, Z = 0",
        hypotheses: "x-independent solution; forward SDE dX = s dW",
        params: &[("r", 0.1), ("s", 0.2), ("x0", 0.0), ("T", 1.0)],
    },
];

fn valid_ids() -> String {
    CATALOG.iter().map(|e| e.id).collect::<Vec<_>>().join(", ")
}

pub fn builtin(id: &str) -> Result<Problem> {
    builtin_with(id, &ProblemParams::new())
}

/// Catalog problem with parameter overrides; unknown parameter names are rejected.
pub fn builtin_with(id: &str, overrides: &ProblemParams) -> Result<Problem> {
    let entry = CATALOG
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::UnknownProblem {
            id: id.to_string(),
            valid: valid_ids(),
        })?;
    let known: BTreeSet<&str> = entry.params.iter().map(|(k, _)| *k).collect();
    if let Some(bad) = overrides.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Config(format!(
            "problem `{id}` has no parameter `{bad}` (known: {})",
            known.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let p = |name: &str| -> f64 {
        overrides.get(name).copied().unwrap_or_else(|| {
            entry
                .params
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .expect("catalog parameter")
        })
    };

    let problem = match id {
        "trig" => trig(p("a"), p("b0"), p("s0"), p("s1"), p("gy"), p("gz"), p("x0"), p("T")),
        "const-sigma" => const_sigma(p("a"), p("b1"), p("s"), p("gy"), p("gz"), p("x0"), p("T")),
        "gbm" => gbm(p("mu"), p("s"), p("gy"), p("gz"), p("x0"), p("T")),
        "abm-linear" => abm_linear(p("mu"), p("s"), p("x0"), p("T")),
        "discount" => discount(p("r"), p("s"), p("x0"), p("T")),
        _ => unreachable!("catalog id without constructor"),
    }?;
    Ok(problem.with_notes(entry.summary, entry.hypotheses))
}

fn constant(c: f64) -> SpaceTimeFn {
    Arc::new(move |_, _| c)
}

/// `sin(x+t) e^{-a t}` and its derivatives.
fn travelling_sine(a: f64) -> [SpaceTimeFn; 4] {
    [
        Arc::new(move |t, x: f64| (x + t).sin() * (-a * t).exp()),
        Arc::new(move |t, x: f64| ((x + t).cos() - a * (x + t).sin()) * (-a * t).exp()),
        Arc::new(move |t, x: f64| (x + t).cos() * (-a * t).exp()),
        Arc::new(move |t, x: f64| -(x + t).sin() * (-a * t).exp()),
    ]
}

fn trig(a: f64, b0: f64, s0: f64, s1: f64, gy: f64, gz: f64, x0: f64, horizon: f64) -> Result<Problem> {
    let [u, u_t, u_x, u_xx] = travelling_sine(a);
    make_manufactured(ManufacturedSpec {
        id: "trig".into(),
        u,
        u_t,
        u_x,
        u_xx,
        g: Arc::new(move |y: f64, z: f64| gy * y.sin() + gz * z.cos()),
        b: constant(b0),
        sigma: Arc::new(move |_, x: f64| s0 + s1 * x.sin()),
        sigma_x: Arc::new(move |_, x: f64| s1 * x.cos()),
        horizon,
        x0,
        domain: DomainRule::Additive {
            sigma_max: s0 + s1.abs(),
            drift_min: b0,
            drift_max: b0,
        },
        exact_transition: None,
    })
}

fn const_sigma(a: f64, b1: f64, s: f64, gy: f64, gz: f64, x0: f64, horizon: f64) -> Result<Problem> {
    let [u, u_t, u_x, u_xx] = travelling_sine(a);
    make_manufactured(ManufacturedSpec {
        id: "const-sigma".into(),
        u,
        u_t,
        u_x,
        u_xx,
        g: Arc::new(move |y: f64, z: f64| gy * y.sin() + gz * z.cos()),
        b: Arc::new(move |_, x: f64| b1 * x.cos()),
        sigma: constant(s),
        sigma_x: constant(0.0),
        horizon,
        x0,
        domain: DomainRule::Additive {
            sigma_max: s,
            drift_min: -b1.abs(),
            drift_max: b1.abs(),
        },
        exact_transition: None,
    })
}

fn gbm(mu: f64, s: f64, gy: f64, gz: f64, x0: f64, horizon: f64) -> Result<Problem> {
    let decay = move |t: f64| (-0.5 * (horizon - t)).exp();
    make_manufactured(ManufacturedSpec {
        id: "gbm".into(),
        u: Arc::new(move |t, x: f64| decay(t) * x.cos()),
        u_t: Arc::new(move |t, x: f64| 0.5 * decay(t) * x.cos()),
        u_x: Arc::new(move |t, x: f64| -decay(t) * x.sin()),
        u_xx: Arc::new(move |t, x: f64| -decay(t) * x.cos()),
        g: Arc::new(move |y: f64, z: f64| gy * y.sin() + gz * z.cos()),
        b: Arc::new(move |_, x| mu * x),
        sigma: Arc::new(move |_, x| s * x),
        sigma_x: constant(s),
        horizon,
        x0,
        domain: DomainRule::Lognormal { mu, s },
        exact_transition: Some(ExactTransition::GeometricBm { mu, s }),
    })
}

fn abm_linear(mu: f64, s: f64, x0: f64, horizon: f64) -> Result<Problem> {
    make_manufactured(ManufacturedSpec {
        id: "abm-linear".into(),
        u: Arc::new(|_, x| x),
        u_t: constant(0.0),
        u_x: constant(1.0),
        u_xx: constant(0.0),
        g: Arc::new(|_, _| 0.0),
        b: constant(mu),
        sigma: constant(s),
        sigma_x: constant(0.0),
        horizon,
        x0,
        domain: DomainRule::Additive {
            sigma_max: s,
            drift_min: mu,
            drift_max: mu,
        },
        exact_transition: Some(ExactTransition::ArithmeticBm { mu, s }),
    })
}

fn discount(r: f64, s: f64, x0: f64, horizon: f64) -> Result<Problem> {
    let y = move |t: f64| (-r * (horizon - t)).exp();
    make_manufactured(ManufacturedSpec {
        id: "discount".into(),
        u: Arc::new(move |t, _| y(t)),
        u_t: Arc::new(move |t, _| r * y(t)),
        u_x: constant(0.0),
        u_xx: constant(0.0),
        g: Arc::new(move |y, _| -r * y),
        b: constant(0.0),
        sigma: constant(s),
        sigma_x: constant(0.0),
        horizon,
        x0,
        domain: DomainRule::Additive {
            sigma_max: s,
            drift_min: 0.0,
            drift_max: 0.0,
        },
        exact_transition: Some(ExactTransition::ArithmeticBm { mu: 0.0, s }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_problems_solve_their_pde() {
        for entry in CATALOG {
            let p = builtin(entry.id).unwrap();
            for (t, x) in p.lattice(50, 50) {
                let r = p.pde_residual(t, x).unwrap();
                assert!(r.abs() < 1e-8, "{}: residual {r} at ({t}, {x})", entry.id);
            }
        }
    }

    #[test]
    fn terminal_value_is_u_at_horizon() {
        for entry in CATALOG {
            let p = builtin(entry.id).unwrap();
            let (lo, hi) = p.working_domain();
            for i in 0..=100 {
                let x = lo + (hi - lo) * i as f64 / 100.0;
                let s = p.true_solution(p.horizon(), x).unwrap();
                assert_eq!(s.y, (p.coefficients.phi)(x), "{}", entry.id);
            }
        }
    }

    #[test]
    fn driver_reproduces_generator_on_the_solution() {
        for entry in CATALOG {
            let p = builtin(entry.id).unwrap();
            let cf = p.closed_form.as_ref().unwrap();
            let c = &p.coefficients;
            for (t, x) in p.lattice(11, 11) {
                let s = (c.sigma)(t, x);
                let ux = (cf.u_x)(t, x);
                let gen = (cf.u_t)(t, x) + (c.b)(t, x) * ux + 0.5 * s * s * (cf.u_xx)(t, x);
                let f = (c.f)(t, x, (cf.u)(t, x), ux * s);
                assert!((f + gen).abs() < 1e-12, "{}", entry.id);
            }
        }
    }

    #[test]
    fn trig_residual_vanishes_at_scattered_points() {
        let p = builtin("trig").unwrap();
        let (lo, hi) = p.working_domain();
        // R2 low-discrepancy sequence
        let (a1, a2) = (0.754_877_666_246_692_7, 0.569_840_290_998_053_3);
        for i in 1..=100 {
            let t = (i as f64 * a1).fract() * p.horizon();
            let x = lo + (hi - lo) * (i as f64 * a2).fract();
            assert!(p.pde_residual(t, x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn abm_linear_has_zero_driver() {
        let p = builtin("abm-linear").unwrap();
        for (t, x) in p.lattice(5, 5) {
            assert_eq!((p.coefficients.f)(t, x, 1.7, -0.3), 0.0);
            assert_eq!((p.coefficients.phi)(x), x);
        }
    }

    #[test]
    fn discount_closed_form() {
        let p = builtin("discount").unwrap();
        let y0 = p.true_solution(0.0, 0.3).unwrap().y;
        assert!((y0 - (-0.1f64).exp()).abs() < 1e-15);
        assert!((y0 - 0.904_837).abs() < 1e-6);
        assert_eq!((p.coefficients.f)(0.2, 1.0, 2.0, 5.0), -0.2);
    }

    #[test]
    fn unknown_id_lists_catalog() {
        let err = builtin("nope").unwrap_err().to_string();
        for entry in CATALOG {
            assert!(err.contains(entry.id));
        }
    }

    #[test]
    fn overrides_apply_and_typos_are_rejected() {
        let mut params = ProblemParams::new();
        params.insert("r".into(), 0.5);
        let p = builtin_with("discount", &params).unwrap();
        assert!((p.true_solution(0.0, 0.0).unwrap().y - (-0.5f64).exp()).abs() < 1e-15);
        params.insert("rr".into(), 0.5);
        assert!(matches!(builtin_with("discount", &params), Err(Error::Config(_))));
    }

    #[test]
    fn exact_tags() {
        assert_eq!(builtin("gbm").unwrap().exact_transition.unwrap().tag(), "geometric-bm");
        assert_eq!(builtin("abm-linear").unwrap().exact_transition.unwrap().tag(), "arithmetic-bm");
        assert!(builtin("trig").unwrap().exact_transition.is_none());
    }
}
