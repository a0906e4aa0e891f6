//! Empirical SVGD direction and block-diagonal SVN operator.

use nalgebra::{DMatrix, DVector};

use super::kernel::{trajectory_kernel, KernelGram, TrajectoryKernelSpec};
use crate::error::{Error, Result};
use crate::linalg::max_asymmetry;

/// `φ(y) = (1/N) Σ_i [γ ∇log p(x_i) k(x_i, y) + ∇_{x_i} k(x_i, y)]`.
///
/// `anneal` (γ) scales the score term only.
pub fn svgd_direction(
    particles: &[DVector<f64>],
    scores: &[DVector<f64>],
    spec: &TrajectoryKernelSpec,
    target: &DVector<f64>,
    anneal: f64,
) -> Result<DVector<f64>> {
    check_lengths(particles.len(), scores.len(), "scores")?;
    let n = particles.len() as f64;
    let mut phi = DVector::zeros(target.len());
    for (x, s) in particles.iter().zip(scores) {
        // k(y, x_i) with gradient w.r.t. x_i is ∇_{x_i} k(x_i, y) by symmetry
        let (k, grad_x) = trajectory_kernel(target, x, spec)?;
        phi.axpy(anneal * k, s, 1.0);
        phi += grad_x;
    }
    Ok(phi / n)
}

/// `H(y) = (1/N) Σ_i [γ B_i k(x_i, y)² + ∇_{x_i} k(x_i, y) ∇_{x_i} k(x_i, y)ᵀ]`
/// where `B_i ≈ −∇² log p(x_i)`.
pub fn svn_block_hessian(
    particles: &[DVector<f64>],
    hessians: &[DMatrix<f64>],
    spec: &TrajectoryKernelSpec,
    target: &DVector<f64>,
    anneal: f64,
) -> Result<DMatrix<f64>> {
    check_lengths(particles.len(), hessians.len(), "hessians")?;
    validate_hessians(hessians)?;
    let d = target.len();
    let n = particles.len() as f64;
    let mut h = DMatrix::zeros(d, d);
    for (x, b) in particles.iter().zip(hessians) {
        let (k, g) = trajectory_kernel(target, x, spec)?;
        h += b * (anneal * k * k);
        h.ger(1.0, &g, &g, 1.0);
    }
    Ok(h / n)
}

pub(crate) fn validate_hessians(hessians: &[DMatrix<f64>]) -> Result<()> {
    for (i, b) in hessians.iter().enumerate() {
        let asym = max_asymmetry(b);
        if asym > 1e-10 * b.amax().max(1.0) {
            return Err(Error::Validation(vec![format!(
                "Hessian of particle {i} is not symmetric (max asymmetry {asym:e})"
            )]));
        }
    }
    Ok(())
}

fn check_lengths(n: usize, m: usize, what: &'static str) -> Result<()> {
    if n != m {
        return Err(Error::Dimension {
            context: what,
            expected: n,
            got: m,
        });
    }
    Ok(())
}

/// SVGD directions at every particle, reusing a precomputed Gram.
pub fn svgd_directions(gram: &KernelGram, scores: &[DVector<f64>], anneal: f64) -> Vec<DVector<f64>> {
    let n = gram.len();
    (0..n)
        .map(|y| {
            let mut phi = DVector::zeros(scores[y].len());
            for i in 0..n {
                phi.axpy(anneal * gram.value(i, y), &scores[i], 1.0);
                phi += gram.grad(i, y);
            }
            phi / n as f64
        })
        .collect()
}

/// Block-diagonal SVN operator at particle `y`, reusing a precomputed Gram.
pub fn svn_hessian_at(
    gram: &KernelGram,
    hessians: &[DMatrix<f64>],
    y: usize,
    anneal: f64,
) -> DMatrix<f64> {
    let n = gram.len();
    let d = hessians[y].nrows();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..n {
        let k = gram.value(i, y);
        let w = anneal * k * k;
        if w != 0.0 {
            h.zip_apply(&hessians[i], |a, b| *a += w * b);
        }
        let g = gram.grad(i, y);
        h.ger(1.0, g, g, 1.0);
    }
    h / n as f64
}
