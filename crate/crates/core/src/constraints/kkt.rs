use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ConstraintEval;
use crate::error::KktError;
use crate::linalg::max_asymmetry;

/// Lower bound `ε` inside `s = √max(−2g, ε)`.
pub const SLACK_FLOOR: f64 = 1e-6;

/// Reciprocal condition threshold below which the Schur complement counts as singular.
const SCHUR_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SlackState {
    pub s: DVector<f64>,
    pub beta: f64,
}

impl SlackState {
    pub fn new(s: DVector<f64>, beta: f64) -> Self {
        Self { s, beta }
    }

    pub fn from_constraints(g: &DVector<f64>, beta: f64) -> Self {
        Self::new(init_slack(g), beta)
    }
}

/// `s_i = √max(−2 g_i, ε)` so that `g + s²/2 = 0` wherever `g ≤ −ε/2`.
pub fn init_slack(g: &DVector<f64>) -> DVector<f64> {
    g.map(|gi| (-2.0 * gi).max(SLACK_FLOOR).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub delta_x: DVector<f64>,
    pub delta_s: DVector<f64>,
    pub lambda_h: DVector<f64>,
    pub lambda_g: DVector<f64>,
    /// `‖Ĵᵀ z − r₂‖`: linearized feasibility residual.
    pub primal_residual: f64,
    /// `‖Ĥ z + Ĵ λ − r₁‖`: stationarity residual.
    pub dual_residual: f64,
}

/// Equality-constrained damped Newton step via the Schur complement.
pub fn csvn_kkt_solve(
    h: &DMatrix<f64>,
    phi: &DVector<f64>,
    eval: &ConstraintEval,
    damping: f64,
) -> Result<KktSolution, KktError> {
    if eval.n_ineq() > 0 {
        return Err(KktError::Shape(
            "inequalities present; use slack_kkt_solve".to_string(),
        ));
    }
    solve(h, phi, eval, None, damping)
}

/// Slack-augmented KKT solve; reduces to [`csvn_kkt_solve`] without inequalities.
pub fn slack_kkt_solve(
    h: &DMatrix<f64>,
    phi: &DVector<f64>,
    eval: &ConstraintEval,
    slack: &SlackState,
    damping: f64,
) -> Result<KktSolution, KktError> {
    if slack.s.len() != eval.n_ineq() {
        return Err(KktError::Shape(format!(
            "{} slacks for {} inequalities",
            slack.s.len(),
            eval.n_ineq()
        )));
    }
    if eval.n_ineq() == 0 {
        return solve(h, phi, eval, None, damping);
    }
    solve(h, phi, eval, Some(slack), damping)
}

fn solve(
    h: &DMatrix<f64>,
    phi: &DVector<f64>,
    eval: &ConstraintEval,
    slack: Option<&SlackState>,
    damping: f64,
) -> Result<KktSolution, KktError> {
    let d = h.nrows();
    if h.ncols() != d || phi.len() != d || eval.dim() != d || eval.jac_g.nrows() != d {
        return Err(KktError::Shape(format!(
            "H is {}x{}, φ has {} entries, Jacobian has {} rows",
            h.nrows(),
            h.ncols(),
            phi.len(),
            eval.dim()
        )));
    }
    if eval.jac_h.ncols() != eval.n_eq() || eval.jac_g.ncols() != eval.n_ineq() {
        return Err(KktError::Shape("Jacobian columns disagree with constraint counts".to_string()));
    }
    let asym = max_asymmetry(h);
    if asym > 1e-10 * h.amax().max(1.0) {
        return Err(KktError::Asymmetric(asym));
    }
    let m_h = eval.n_eq();
    let m_g = slack.map_or(0, |s| s.s.len());
    if m_g > 0 && !(damping > 0.0) {
        return Err(KktError::Factorization { damping });
    }

    let mut damped = h.clone();
    for i in 0..d {
        damped[(i, i)] += damping;
    }
    let chol = Cholesky::new(damped).ok_or(KktError::Factorization { damping })?;

    // Augmented primal space z = [δx; δs] with block-diagonal Ĥ = diag(H+μI, μI)
    // and constraint matrix Ĵ = [[∇h, ∇g], [0, S]].
    let dz = d + m_g;
    let m = m_h + m_g;
    let mut jac = DMatrix::zeros(dz, m);
    jac.view_mut((0, 0), (d, m_h)).copy_from(&eval.jac_h);
    let mut r1 = DVector::zeros(dz);
    r1.rows_mut(0, d).copy_from(phi);
    let mut r2 = DVector::zeros(m);
    r2.rows_mut(0, m_h).copy_from(&(-&eval.h));
    if let Some(sl) = slack {
        jac.view_mut((0, m_h), (d, m_g)).copy_from(&eval.jac_g);
        for k in 0..m_g {
            jac[(d + k, m_h + k)] = sl.s[k];
            r1[d + k] = -sl.beta * sl.s[k];
            r2[m_h + k] = -eval.g[k] - 0.5 * sl.s[k] * sl.s[k];
        }
    }

    let apply_inv = |chol: &Cholesky<f64, Dyn>, v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(dz);
        out.rows_mut(0, d).copy_from(&chol.solve(&v.rows(0, d).into_owned()));
        for k in 0..m_g {
            out[d + k] = v[d + k] / damping;
        }
        out
    };

    let hinv_r1 = apply_inv(&chol, &r1);
    let (z, lambda) = if m == 0 {
        (hinv_r1, DVector::zeros(0))
    } else {
        let mut w = DMatrix::zeros(dz, m);
        let top = chol.solve(&jac.rows(0, d).into_owned());
        w.rows_mut(0, d).copy_from(&top);
        for k in 0..m_g {
            for c in 0..m {
                w[(d + k, c)] = jac[(d + k, c)] / damping;
            }
        }
        let schur = jac.transpose() * &w;
        let schur = (&schur + schur.transpose()) * 0.5;
        let schur_chol = Cholesky::new(schur).ok_or(KktError::SingularSchur { damping })?;
        let diag = schur_chol.l_dirty().diagonal();
        let (dmin, dmax) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if !(dmin * dmin > SCHUR_RCOND * dmax * dmax) {
            return Err(KktError::SingularSchur { damping });
        }
        let rhs = jac.transpose() * &hinv_r1 - &r2;
        let lambda = schur_chol.solve(&rhs);
        let z = &hinv_r1 - &w * &lambda;
        (z, lambda)
    };

    // residuals of the assembled system
    let mut hz = DVector::zeros(dz);
    let mut top = h * z.rows(0, d);
    top.axpy(damping, &z.rows(0, d), 1.0);
    hz.rows_mut(0, d).copy_from(&top);
    for k in 0..m_g {
        hz[d + k] = damping * z[d + k];
    }
    let dual_residual = (hz + &jac * &lambda - &r1).norm();
    let primal_residual = (jac.transpose() * &z - &r2).norm();

    Ok(KktSolution {
        delta_x: z.rows(0, d).into_owned(),
        delta_s: z.rows(d, m_g).into_owned(),
        lambda_h: lambda.rows(0, m_h).into_owned(),
        lambda_g: lambda.rows(m_h, m_g).into_owned(),
        primal_residual,
        dual_residual,
    })
}
