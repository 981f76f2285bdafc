use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const JITTER_START: f64 = 1e-8;
pub(crate) const JITTER_MAX: f64 = 1e-4;

/// Lower Cholesky factor of `c`, adding `scale·1e-8` to the diagonal (doubling
/// up to `scale·1e-4`) when the plain factorization fails. Returns the factor
/// and the jitter that was applied.
pub(crate) fn cholesky_with_jitter(c: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Some(chol) = c.clone().cholesky() {
        return Ok((chol.unpack(), 0.0));
    }
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-12) {
        let mut shifted = c.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::Numerical(format!(
        "covariance matrix ({n}x{n}) is not positive definite even with jitter {:.1e}",
        JITTER_MAX * scale,
        n = c.nrows()
    )))
}

/// Solves `L x = b` for lower-triangular `L` by column-oriented forward substitution.
pub(crate) fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    forward_substitute(l, x.as_mut_slice(), 0);
    x
}

/// In-place `L x = b` where `x[..first]` is known to be zero.
fn forward_substitute(l: &DMatrix<f64>, x: &mut [f64], first: usize) {
    let n = l.nrows();
    let ls = l.as_slice();
    for k in first..n {
        let xk = x[k] / ls[k * n + k];
        x[k] = xk;
        if xk != 0.0 {
            for (xi, li) in x[k + 1..].iter_mut().zip(&ls[k * n + k + 1..(k + 1) * n]) {
                *xi -= li * xk;
            }
        }
    }
}

/// Solves `(L Lᵀ) x = b`.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = solve_lower(l, b);
    l.tr_solve_lower_triangular(&y)
        .expect("cholesky factor has a positive diagonal")
}

/// `log det(L Lᵀ)`.
pub(crate) fn cholesky_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `L⁻¹` for lower-triangular `L`.
pub(crate) fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for (j, col) in inv.as_mut_slice().chunks_mut(n.max(1)).enumerate().take(n) {
        col[j] = 1.0;
        forward_substitute(l, col, j);
    }
    inv
}

/// `(L Lᵀ)⁻¹`.
pub(crate) fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let linv = lower_triangular_inverse(l);
    linv.transpose() * linv
}

/// Log-determinant of a symmetric matrix with eigenvalues floored at `floor`.
pub(crate) fn floored_log_det(m: &DMatrix<f64>, floor: f64) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].max(floor).ln();
    }
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues()
        .iter()
        .map(|e| e.max(floor).ln())
        .sum()
}
