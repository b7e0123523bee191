//! Largest-eigenvalue estimates for symmetric positive semidefinite operators.

use ndarray::Array1;

/// Outcome of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic, non-degenerate start vector. Avoids the all-ones vector,
/// which lies in the null space of every graph Laplacian.
fn start_vector(dim: usize) -> Array1<f64> {
    let mut v = Array1::from_shape_fn(dim, |j| 1.0 + 0.5 * ((j as f64) * 1.618_033_988_749_895 + 0.3).sin());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    v
}

/// Power iteration with Rayleigh-quotient stopping for a symmetric PSD operator.
///
/// `apply` must compute `A v`. Stops when successive Rayleigh quotients agree to
/// `rel_tol`; returns `converged = false` after `max_iter` iterations.
pub fn power_iteration<F>(dim: usize, mut apply: F, rel_tol: f64, max_iter: usize) -> PowerEstimate
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    if dim == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v = start_vector(dim);
    let mut previous = f64::NAN;
    for iter in 1..=max_iter {
        let w = apply(&v);
        let rayleigh = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return PowerEstimate {
                value: rayleigh.max(0.0),
                iterations: iter,
                converged: norm == 0.0,
            };
        }
        if (rayleigh - previous).abs() <= rel_tol * rayleigh.abs() {
            return PowerEstimate {
                value: rayleigh,
                iterations: iter,
                converged: true,
            };
        }
        previous = rayleigh;
        v = w / norm;
    }
    PowerEstimate {
        value: previous,
        iterations: max_iter,
        converged: false,
    }
}
