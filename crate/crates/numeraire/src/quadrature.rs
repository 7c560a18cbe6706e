//! Gauss-Hermite quadrature.
//!
//! Nodes and weights follow the physicists' convention,
//!
//! ```text
//!   integral e^{-x^2} f(x) dx  ~=  sum_i w_i f(x_i),
//! ```
//!
//! computed by the Golub-Welsch method: the nodes are the eigenvalues of the
//! symmetric tridiagonal Jacobi matrix with off-diagonal sqrt(k/2), and the
//! weight of node `i` is `sqrt(pi)` times the squared first component of the
//! corresponding normalized eigenvector. Rules are cached per order since the
//! eigendecomposition dominates the cost.
//!
//! Expectations against a standard normal use the substitution `x = xi/sqrt(2)`:
//! `E f(xi) = (1/sqrt(pi)) sum_i w_i f(sqrt(2) x_i)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the rule of the given order (number of nodes, >= 1).
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        if order == 1 {
            return GaussHermite {
                nodes: vec![0.0],
                weights: vec![SQRT_PI],
            };
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let first = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], SQRT_PI * first * first)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
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

    /// `integral e^{-x^2} f(x) dx`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E f(xi)` for `xi ~ N(0, 1)`.
    pub fn expect_standard_normal(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w / SQRT_PI * f(std::f64::consts::SQRT_2 * x))
            .sum()
    }
}

/// Shared, cached rule of the given order.
pub fn cached(order: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(order)
        .or_insert_with(|| Arc::new(GaussHermite::new(order)))
        .clone()
}

/// Controls adaptive expectation evaluation.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub initial_order: usize,
    pub max_order: usize,
    /// Tolerance on the change between successive order doublings,
    /// measured relative to `1 + |value|`.
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            initial_order: 64,
            max_order: 512,
            tol: 1e-10,
        }
    }
}

/// `E f(xi)`, `xi ~ N(0, 1)`, with order doubling until two successive rules
/// agree to `cfg.tol`. Errors if `max_order` is reached without agreement
/// (e.g. wildly oscillatory integrands); the error carries the achieved
/// tolerance.
pub fn adaptive_expectation(cfg: &QuadratureConfig, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    let mut order = cfg.initial_order.max(2);
    let mut prev = cached(order).expect_standard_normal(&mut f);
    let mut achieved = f64::INFINITY;
    while order * 2 <= cfg.max_order {
        order *= 2;
        let next = cached(order).expect_standard_normal(&mut f);
        achieved = (next - prev).abs() / (1.0 + next.abs());
        if achieved <= cfg.tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        achieved,
        requested: cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_order_rules_match_closed_forms() {
        let g2 = GaussHermite::new(2);
        assert_relative_eq!(g2.nodes()[0], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(g2.nodes()[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(g2.weights()[0], SQRT_PI / 2.0, epsilon = 1e-12);

        let g3 = GaussHermite::new(3);
        assert_relative_eq!(g3.nodes()[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g3.nodes()[2], (1.5f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g3.weights()[1], 2.0 * SQRT_PI / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g3.weights()[0], SQRT_PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_moments_are_exact() {
        let g = GaussHermite::new(8);
        assert_relative_eq!(g.expect_standard_normal(|x| x * x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.expect_standard_normal(|x| x.powi(4)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.expect_standard_normal(|x| x.powi(3)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lognormal_mean_converges() {
        // E e^{sigma xi} = e^{sigma^2/2}.
        let sigma = 0.7;
        let v = adaptive_expectation(&QuadratureConfig::default(), |x| (sigma * x).exp()).unwrap();
        assert_relative_eq!(v, (sigma * sigma / 2.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn cache_returns_same_rule() {
        let a = cached(64);
        let b = cached(64);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
