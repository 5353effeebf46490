//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, Schur};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest singular value. Zero for empty matrices.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}

/// Largest singular value together with its left and right singular vectors.
pub fn top_singular_triplet(m: &Matrix) -> (f64, Vector, Vector) {
    let svd = m.clone().svd(true, true);
    let (idx, s) =
        svd.singular_values.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &s)| if s > best.1 { (i, s) } else { best },
        );
    let u = svd.u.as_ref().expect("requested").column(idx).into_owned();
    let v = svd.v_t.as_ref().expect("requested").row(idx).transpose();
    (s, u, v)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn sym_eig_range(m: &Matrix) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        })
}

/// Spectral radius via a real Schur decomposition.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim("spectral radius of a non-square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(libm::hypot(z.re, z.im))))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm_one(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn euclid(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

/// `out = m * x` for a slice-backed vector.
pub fn mat_vec(m: &Matrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
    }
}

/// `xᵀ m x`.
pub fn quad_form(m: &Matrix, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}
