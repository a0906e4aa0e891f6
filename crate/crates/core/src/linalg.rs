//! Small dense linear-algebra helpers shared by the prior and the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Maximum number of jitter escalations after the initial attempt.
pub const JITTER_RETRIES: usize = 6;

/// Cholesky factorization that adds diagonal jitter when the plain factorization
/// fails. Jitter starts at `1e-12 * trace / dim` and grows tenfold per retry.
/// Returns the factor together with the jitter that was added (0 if none).
pub fn cholesky_with_jitter(mat: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = mat.nrows();
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok((chol, 0.0));
    }
    let base = (1e-12 * mat.trace().abs() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut jitter = base;
    for _ in 0..=JITTER_RETRIES {
        let mut m = mat.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: jitter / 10.0,
        min_eigenvalue: min_eigenvalue(mat),
    })
}

pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    if mat.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrized(mat);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrized(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

pub fn max_asymmetry(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst
}

/// Rows/columns `idx` of a square matrix.
pub fn submatrix(mat: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| mat[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
