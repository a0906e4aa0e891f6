//! Linearized constraint handling for one particle: null-space projection for
//! cSVGD and Schur-complement KKT solves for cSVN, with squared-slack
//! inequalities.
//!
//! Sign conventions: the update solves
//!
//! ```text
//! [ H+μI   0    ∇h   ∇g   ] [δx]   [ φ        ]
//! [ 0      μI   0    S    ] [δs] = [ −β s     ]
//! [ ∇hᵀ    0    0    0    ] [λh]   [ −h       ]
//! [ ∇gᵀ    S    0    0    ] [λg]   [ −g − s²/2]
//! ```
//!
//! with `S = diag(s)`. Without inequalities this is the plain equality
//! system `[[H+μI, ∇h], [∇hᵀ, 0]] [δ; λ] = [φ; −h]`.

mod kkt;
mod projection;

pub use kkt::{csvn_kkt_solve, init_slack, slack_kkt_solve, KktSolution, SlackState, SLACK_FLOOR};
pub use projection::{csvgd_step, nullspace_projection, PINV_RTOL};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Constraint values and Jacobians at one particle. Jacobians are stored
/// column-per-constraint (`d × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub h: DVector<f64>,
    pub jac_h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub jac_g: DMatrix<f64>,
}

impl ConstraintEval {
    /// No constraints at all.
    pub fn empty(dim: usize) -> Self {
        Self {
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(dim, 0),
            g: DVector::zeros(0),
            jac_g: DMatrix::zeros(dim, 0),
        }
    }

    pub fn equality(h: DVector<f64>, jac_h: DMatrix<f64>) -> Self {
        let d = jac_h.nrows();
        Self {
            h,
            jac_h,
            g: DVector::zeros(0),
            jac_g: DMatrix::zeros(d, 0),
        }
    }

    pub fn with_inequalities(mut self, g: DVector<f64>, jac_g: DMatrix<f64>) -> Self {
        self.g = g;
        self.jac_g = jac_g;
        self
    }

    pub fn dim(&self) -> usize {
        self.jac_h.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.h.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.g.len()
    }

    pub fn max_abs_h(&self) -> f64 {
        self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean_abs_h(&self) -> f64 {
        if self.h.is_empty() {
            0.0
        } else {
            self.h.iter().map(|v| v.abs()).sum::<f64>() / self.h.len() as f64
        }
    }

    /// Largest inequality violation `max(0, g)`.
    pub fn max_violation_g(&self) -> f64 {
        self.g.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let mut problems = Vec::new();
        if self.jac_h.ncols() != self.h.len() {
            problems.push(format!(
                "equality Jacobian has {} columns for {} constraints",
                self.jac_h.ncols(),
                self.h.len()
            ));
        }
        if self.jac_g.ncols() != self.g.len() {
            problems.push(format!(
                "inequality Jacobian has {} columns for {} constraints",
                self.jac_g.ncols(),
                self.g.len()
            ));
        }
        if self.jac_g.nrows() != d {
            problems.push(format!(
                "inequality Jacobian has {} rows, expected {d}",
                self.jac_g.nrows()
            ));
        }
        let finite = self.h.iter().chain(self.g.iter()).all(|v| v.is_finite())
            && self.jac_h.iter().chain(self.jac_g.iter()).all(|v| v.is_finite());
        if !finite {
            problems.push("constraint values or Jacobians are not finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}
