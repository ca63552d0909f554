//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for minimum-norm least squares.
pub const RANK_TOL: f64 = 1e-12;

/// Euclidean norm of every column.
pub fn column_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm()))
}

/// Scales every column to unit l2 norm. A zero column is an error.
pub fn normalize_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroColumn(j));
        }
        col /= n;
    }
    Ok(out)
}

/// Largest eigenvalue of `m^T m`, i.e. the squared spectral norm of `m`.
///
/// Uses whichever Gram matrix (`m^T m` or `m m^T`) is smaller.
pub fn spectral_norm_sq(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() < m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    max_eigenvalue(gram)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(sym: DMatrix<f64>) -> f64 {
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE) * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps)
        .map(|x| x.column(0).into_owned())
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

pub fn sq_dist(a: DVectorView<'_, f64>, b: DVectorView<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Squared norm `||x||^2`.
pub fn norm_sq(v: &DVector<f64>) -> f64 {
    v.dot(v)
}
