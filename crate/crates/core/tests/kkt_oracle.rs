mod common;

use nalgebra::DVector;
use steinplan::constraints::{csvgd_step, csvn_kkt_solve, nullspace_projection, ConstraintEval, PINV_RTOL};

#[test]
fn schur_solvers_match_dense_solves() {
    let (eq, slack, idem, orth) = common::kkt_oracle_errors(200, 11);
    assert!(eq <= 1e-8, "equality form {eq:e}");
    assert!(slack <= 1e-8, "slack form {slack:e}");
    assert!(idem <= 1e-10, "P² − P {idem:e}");
    assert!(orth <= 1e-10, "∇hᵀP {orth:e}");
}

#[test]
fn csvgd_step_is_projected_direction_plus_gauss_newton_correction() {
    let mut r = common::rng(5);
    for _ in 0..50 {
        let jac = common::normal_mat(&mut r, 7, 3);
        let h = common::normal_vec(&mut r, 3, 1.0);
        let phi = common::normal_vec(&mut r, 7, 1.0);
        let eval = ConstraintEval::equality(h.clone(), jac.clone());
        let step = csvgd_step(&phi, &eval, PINV_RTOL).unwrap();
        let p = nullspace_projection(&jac, PINV_RTOL);
        // dense oracle: (∇hᵀ)⁺ h = ∇h (∇hᵀ∇h)⁻¹ h for full column rank
        let correction = &jac * (jac.transpose() * &jac).lu().solve(&h).unwrap();
        let expected = &p * &phi - correction;
        assert!(common::rel_err(&step, &expected) <= 1e-9);
        // linearized constraint is met exactly by the full step
        assert!((&h + jac.transpose() * &step).amax() <= 1e-9);
    }
}

#[test]
fn full_newton_step_satisfies_linearized_constraint() {
    let mut r = common::rng(9);
    for _ in 0..50 {
        let h = common::spd(&mut r, 6);
        let jac = common::normal_mat(&mut r, 6, 2);
        let hv = common::normal_vec(&mut r, 2, 1.0);
        let phi = common::normal_vec(&mut r, 6, 1.0);
        let sol = csvn_kkt_solve(&h, &phi, &ConstraintEval::equality(hv.clone(), jac.clone()), 1e-2).unwrap();
        let lin: DVector<f64> = &hv + jac.transpose() * &sol.delta_x;
        assert!(lin.amax() <= 1e-10);
        assert!(sol.primal_residual <= 1e-10 && sol.dual_residual <= 1e-9);
    }
}
