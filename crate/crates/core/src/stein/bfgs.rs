//! BFGS approximation of `−∇² log p` kept per particle.

use nalgebra::{DMatrix, DVector};

/// Curvature safeguard: updates with `sᵀy ≤ CURVATURE_TOL |s| |y|` are skipped.
pub const CURVATURE_TOL: f64 = 1e-10;

/// Standard BFGS update of a Hessian approximation.
///
/// `B⁺ = B − B s sᵀ B / (sᵀ B s) + y yᵀ / (yᵀ s)`; returns `B` unchanged when
/// the curvature condition fails.
pub fn bfgs_update(h: &DMatrix<f64>, step: &DVector<f64>, grad_diff: &DVector<f64>) -> DMatrix<f64> {
    let mut out = h.clone();
    bfgs_update_in_place(&mut out, step, grad_diff);
    out
}

/// In-place variant; returns whether the update was applied.
pub fn bfgs_update_in_place(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> bool {
    let sy = s.dot(y);
    if !(sy > CURVATURE_TOL * s.norm() * y.norm()) {
        return false;
    }
    let hs = &*h * s;
    let shs = s.dot(&hs);
    if !(shs > 0.0) {
        return false;
    }
    h.ger(-1.0 / shs, &hs, &hs, 1.0);
    h.ger(1.0 / sy, y, y, 1.0);
    // keep exact symmetry against round-off drift
    let n = h.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = m;
            h[(j, i)] = m;
        }
    }
    true
}

/// Per-particle quasi-Newton state.
#[derive(Debug, Clone)]
pub struct BfgsState {
    hessian: DMatrix<f64>,
    last_point: Option<DVector<f64>>,
    /// Gradient of `−log p` at `last_point`.
    last_grad: Option<DVector<f64>>,
    init_scale: f64,
}

impl BfgsState {
    /// Scaled identity `|∇ log p| I` at the first iterate (1 if the score vanishes).
    pub fn new(dim: usize, score: &DVector<f64>) -> Self {
        let scale = score.norm();
        let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
        Self {
            hessian: DMatrix::identity(dim, dim) * scale,
            last_point: None,
            last_grad: None,
            init_scale: scale,
        }
    }

    /// Scaled identity `scale · I`; a zero scale starts from the zero matrix.
    pub fn with_scale(dim: usize, scale: f64) -> Self {
        let scale = if scale.is_finite() && scale >= 0.0 { scale } else { 1.0 };
        Self {
            hessian: DMatrix::identity(dim, dim) * scale,
            last_point: None,
            last_grad: None,
            init_scale: scale,
        }
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Feeds the current point and score; updates from the previous pair.
    pub fn observe(&mut self, point: &DVector<f64>, score: &DVector<f64>) -> bool {
        let grad = -score;
        let mut applied = false;
        if let (Some(p), Some(g)) = (&self.last_point, &self.last_grad) {
            let s = point - p;
            let y = &grad - g;
            applied = bfgs_update_in_place(&mut self.hessian, &s, &y);
        }
        self.last_point = Some(point.clone());
        self.last_grad = Some(grad);
        applied
    }

    pub fn reset(&mut self) {
        let n = self.hessian.nrows();
        self.hessian = DMatrix::identity(n, n) * self.init_scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_curvature_skipped() {
        let h = DMatrix::identity(2, 2);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![-1.0, 0.0]);
        assert_eq!(bfgs_update(&h, &s, &y), h);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(bfgs_update(&h, &s, &y), h);
    }

    #[test]
    fn rank_two_formula_from_identity() {
        let h = DMatrix::<f64>::identity(3, 3);
        let s = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let y = DVector::from_vec(vec![2.0, 1.0, 0.5]);
        let out = bfgs_update(&h, &s, &y);
        // with B = I: I − s sᵀ / sᵀs + y yᵀ / yᵀs
        let direct = DMatrix::<f64>::identity(3, 3) - &s * s.transpose() / s.dot(&s) + &y * y.transpose() / y.dot(&s);
        assert!((out - direct).amax() < 1e-14);
    }

    #[test]
    fn secant_condition_holds() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = DVector::from_vec(vec![0.5, -0.2]);
        let y = DVector::from_vec(vec![1.0, 0.1]);
        let out = bfgs_update(&h, &s, &y);
        assert!((&out * &s - &y).amax() < 1e-14);
    }

    #[test]
    fn state_reset_restores_scaled_identity() {
        let score = DVector::from_vec(vec![3.0, 4.0]);
        let mut st = BfgsState::new(2, &score);
        assert_eq!(st.hessian()[(0, 0)], 5.0);
        st.observe(&DVector::from_vec(vec![0.0, 0.0]), &score);
        st.observe(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![1.0, 4.0]));
        assert_ne!(st.hessian()[(0, 0)], 5.0);
        st.reset();
        assert_eq!(st.hessian(), &(DMatrix::identity(2, 2) * 5.0));
    }
}
