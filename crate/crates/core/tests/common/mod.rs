#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;

pub type Mat = DMatrix<f64>;

/// Spectral radius from nalgebra's eigenvalue routine.
pub fn spectral_radius_oracle(a: &Mat) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re.hypot(z.im))
        .fold(0.0, f64::max)
}

pub fn square(max_n: usize) -> impl Strategy<Value = Mat> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| Mat::from_vec(n, n, v)))
}

/// Matrix rescaled to a spectral radius in `[0.05, max_rho]`.
pub fn schur(max_n: usize, max_rho: f64) -> impl Strategy<Value = Mat> {
    (square(max_n), 0.05..max_rho).prop_map(|(a, rho)| {
        let r = spectral_radius_oracle(&a).max(1e-12);
        a * (rho / r)
    })
}

/// `GᵀG + 0.1·I` for a random square `G`.
pub fn positive_definite(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let g = Mat::from_vec(n, n, v);
        g.transpose() * &g + Mat::identity(n, n) * 0.1
    })
}
