//! Small dense solvers shared by encoding and decoding.
//!
//! Everything here operates on gathered column sets, which stay small by
//! construction (unit sizes and local decoder supports), so plain dense
//! factorizations are the right tool. Pseudo-inverse applications go through
//! a Gram matrix and a symmetric eigendecomposition rather than an iterative
//! SVD: the Gram side is the smaller dimension and the decomposition is
//! reliable on exactly rank-deficient input (duplicate vectors).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Builds a `d x s` matrix from `s` column slices of length `d`.
pub(crate) fn columns_to_matrix(columns: &[&[f64]], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, columns.len());
    for (j, col) in columns.iter().enumerate() {
        m.column_mut(j).copy_from_slice(col);
    }
    m
}

/// Eigenvalue cutoff relative to the largest eigenvalue of a Gram matrix.
///
/// `rel_sv_cutoff` is expressed on the singular-value scale and therefore
/// squared; it never drops below the `max(rows, cols) * eps` noise floor of
/// the eigendecomposition itself.
fn gram_cutoff(rows: usize, cols: usize, rel_sv_cutoff: Option<f64>) -> f64 {
    let floor = rows.max(cols) as f64 * f64::EPSILON;
    match rel_sv_cutoff {
        Some(t) => (t * t).max(floor),
        None => floor,
    }
}

fn psd_eigen(g: DMatrix<f64>) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    nalgebra::SymmetricEigen::try_new(g, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigendecomposition stalled".into()))
}

/// Minimum-norm least-squares solution of `a * v ≈ b`.
///
/// Uses `A^T (A A^T)^+ b` when `a` is wide and `(A^T A)^+ A^T b` when tall,
/// with small eigenvalues of the Gram matrix treated as zero.
pub(crate) fn min_norm_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_sv_cutoff: Option<f64>,
) -> Result<DVector<f64>> {
    let (r, c) = a.shape();
    let cutoff = gram_cutoff(r, c, rel_sv_cutoff);
    if r <= c {
        let eigen = psd_eigen(a * a.transpose())?;
        let lmax = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let mut w = eigen.eigenvectors.transpose() * b;
        for (i, l) in eigen.eigenvalues.iter().enumerate() {
            w[i] = if *l > cutoff * lmax { w[i] / l } else { 0.0 };
        }
        Ok(a.transpose() * (&eigen.eigenvectors * w))
    } else {
        let eigen = psd_eigen(a.transpose() * a)?;
        let lmax = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let mut w = eigen.eigenvectors.transpose() * (a.transpose() * b);
        for (i, l) in eigen.eigenvalues.iter().enumerate() {
            w[i] = if *l > cutoff * lmax { w[i] / l } else { 0.0 };
        }
        Ok(&eigen.eigenvectors * w)
    }
}

/// Least-squares solution of `min ||x - a u||` for a `d x s` atom matrix.
///
/// Tall full-column-rank systems go through QR; everything else takes the
/// minimum-norm pseudo-inverse route (wide full-row-rank systems try a
/// Cholesky Gram shortcut first).
pub(crate) fn least_squares(a: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (d, s) = (a.nrows(), a.ncols());
    if s == 0 {
        return Err(Error::EmptySupport);
    }
    if s <= d {
        let qr = a.clone().qr();
        let r = qr.r();
        let rmax = (0..s).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
        let eps_floor = d.max(s) as f64 * f64::EPSILON * rmax;
        let full_rank = rmax > 0.0 && (0..s).all(|i| r[(i, i)].abs() > eps_floor);
        if full_rank {
            let mut y = qr.q().transpose() * x;
            if r.solve_upper_triangular_mut(&mut y) {
                return Ok(y);
            }
        }
        min_norm_solve(a, x, None)
    } else {
        let gram = a * a.transpose();
        if let Some(chol) = gram.cholesky() {
            let w = chol.solve(x);
            return Ok(a.transpose() * w);
        }
        min_norm_solve(a, x, None)
    }
}

/// Residual `||x - a u||` of a candidate solution.
#[cfg(test)]
pub(crate) fn residual_norm(a: &DMatrix<f64>, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (x - a * u).norm()
}
