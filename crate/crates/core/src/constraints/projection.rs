use nalgebra::{DMatrix, DVector};

use super::ConstraintEval;
use crate::error::{Error, Result};

/// Singular values below `PINV_RTOL · σ_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// Orthonormal basis of the numerically non-null column space of `j`, with
/// the matching singular values and right singular vectors.
struct ColumnSpace {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

fn column_space(j: &DMatrix<f64>, rtol: f64) -> ColumnSpace {
    let (d, m) = j.shape();
    if m == 0 || d == 0 {
        return ColumnSpace {
            u: DMatrix::zeros(d, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(m, 0),
        };
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V");
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| s_max > 0.0 && svd.singular_values[k] > rtol * s_max)
        .collect();
    ColumnSpace {
        u: DMatrix::from_fn(d, keep.len(), |r, c| u[(r, keep[c])]),
        sigma: keep.iter().map(|&k| svd.singular_values[k]).collect(),
        v: DMatrix::from_fn(m, keep.len(), |r, c| v_t[(keep[c], r)]),
    }
}

/// `P = I − J (JᵀJ)⁺ Jᵀ`, the orthogonal projector onto the complement of the
/// column space of `J`. Rank-deficient Jacobians use a truncated
/// pseudo-inverse with relative tolerance `tol`.
pub fn nullspace_projection(j: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let d = j.nrows();
    let cs = column_space(j, tol);
    let mut p = DMatrix::identity(d, d);
    p.gemm(-1.0, &cs.u, &cs.u.transpose(), 1.0);
    p
}

/// cSVGD update `δ = P φ − (∇hᵀ)⁺ h`.
pub fn csvgd_step(phi: &DVector<f64>, eval: &ConstraintEval, tol: f64) -> Result<DVector<f64>> {
    eval.validate()?;
    if eval.n_ineq() > 0 {
        return Err(Error::Config(
            "cSVGD projection handles equality constraints only".to_string(),
        ));
    }
    if phi.len() != eval.dim() {
        return Err(Error::Dimension {
            context: "csvgd direction",
            expected: eval.dim(),
            got: phi.len(),
        });
    }
    let cs = column_space(&eval.jac_h, tol);
    // P φ = φ − U Uᵀ φ
    let proj = &cs.u.transpose() * phi;
    let mut delta = phi - &cs.u * proj;
    // (Jᵀ)⁺ h = U Σ⁻¹ Vᵀ h
    let vh = cs.v.transpose() * &eval.h;
    let scaled = DVector::from_fn(cs.sigma.len(), |k, _| vh[k] / cs.sigma[k]);
    delta -= &cs.u * scaled;
    Ok(delta)
}
