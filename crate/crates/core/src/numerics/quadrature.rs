//! Gauss–Hermite rules for the standard normal measure.
//!
//! Nodes are the roots of the probabilists' Hermite polynomial `He_n`. They
//! are seeded from the eigenvalues of the symmetric Jacobi matrix
//! (off-diagonal `√k`) and polished by Newton's method on the orthonormal
//! three-term recurrence; weights come from the Christoffel function
//! `w_j = 1 / Σ_k p_k(ξ_j)²`, which keeps the tiny tail weights accurate to
//! full relative precision.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from raw nodes and weights (used for fault injection in
    /// self-checks).
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "quadrature nodes and weights must be non-empty and of equal length".into(),
            ));
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_node(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `Σ w_j g(ξ_j)`, rejecting non-finite integrand values.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = g(x);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand(x));
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Largest deviation of `Σ w ξ^m` from the standard normal moment over
    /// `m = 0..=2n-1`, relative to `max(1, Σ w |ξ|^m)`.
    pub fn moment_defect(&self) -> f64 {
        (0..2 * self.order())
            .map(|m| {
                let (quad, scale) = self.nodes.iter().zip(&self.weights).fold(
                    (0.0, 0.0),
                    |(q, s), (x, w)| {
                        let term = w * x.powi(m as i32);
                        (q + term, s + term.abs())
                    },
                );
                (quad - normal_moment(m as u32)).abs() / scale.max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// `E ξ^m` for `ξ ~ N(0, 1)`: zero for odd `m`, `(m-1)!!` for even `m`.
pub fn normal_moment(m: u32) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    (1..m).step_by(2).map(|k| k as f64).product()
}

/// Orthonormal Hermite values `p_{n-1}(x)`, `p_n(x)` and the sum `Σ_{k<n} p_k(x)²`.
fn recurrence(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur, sum_sq)
}

pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::QuadratureOrder(n));
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    for x in nodes.iter_mut() {
        for _ in 0..8 {
            // p_n' = √n p_{n-1} for the orthonormal family
            let (p_prev, p_n, _) = recurrence(n, *x);
            let step = p_n / ((n as f64).sqrt() * p_prev);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // exact symmetry
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes.iter().map(|&x| 1.0 / recurrence(n, x).2).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    for i in 0..n / 2 {
        let m = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = m;
        weights[n - 1 - i] = m;
    }
    Ok(QuadratureRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_in_closed_form() {
        let r = gauss_hermite(1).unwrap();
        assert_eq!(r.nodes(), &[0.0]);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15);

        let r = gauss_hermite(2).unwrap();
        assert!((r.nodes()[0] + 1.0).abs() < 1e-15 && (r.nodes()[1] - 1.0).abs() < 1e-15);
        assert!(r.weights().iter().all(|w| (w - 0.5).abs() < 1e-15));

        // from the moment equations Σw ξ² = 1, Σw ξ⁴ = 3
        let r = gauss_hermite(3).unwrap();
        let s3 = 3f64.sqrt();
        for (x, e) in r.nodes().iter().zip([-s3, 0.0, s3]) {
            assert!((x - e).abs() < 1e-14);
        }
        for (w, e) in r.weights().iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_are_exact_up_to_degree_2n_minus_1() {
        for n in 1..=32 {
            let r = gauss_hermite(n).unwrap();
            let total: f64 = r.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "n={n}");
            assert!(r.moment_defect() < 1e-12, "n={n}: {}", r.moment_defect());
        }
    }

    #[test]
    fn nodes_are_roots() {
        // Newton correction left at each node
        for n in [5, 20, 40, 64] {
            let r = gauss_hermite(n).unwrap();
            for &x in r.nodes() {
                let (p_prev, p_n, _) = recurrence(n, x);
                let dx = p_n / ((n as f64).sqrt() * p_prev);
                assert!(dx.abs() < 1e-13, "n={n}, x={x}, dx={dx}");
            }
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(gauss_hermite(0), Err(Error::QuadratureOrder(0))));
        assert!(matches!(gauss_hermite(65), Err(Error::QuadratureOrder(65))));
    }

    #[test]
    fn integrates_known_functions() {
        let r = gauss_hermite(20).unwrap();
        assert!((r.integrate(|_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((r.integrate(|x| x * x).unwrap() - 1.0).abs() < 1e-12);
        // E e^{aξ} = e^{a²/2}
        let v = r.integrate(|x| (0.3 * x).exp()).unwrap();
        assert!((v - 1.046_027_859_908_717).abs() < 1e-10, "{v}");
        assert!(matches!(r.integrate(|x| 1.0 / x.abs().min(0.0)), Err(Error::NonFiniteIntegrand(_))));
    }

    #[test]
    fn perturbed_weight_breaks_moments() {
        let r = gauss_hermite(10).unwrap();
        let mut w = r.weights().to_vec();
        w[3] += 1e-6;
        let bad = QuadratureRule::from_parts(r.nodes().to_vec(), w).unwrap();
        assert!(bad.moment_defect() > 1e-12);
    }
}
