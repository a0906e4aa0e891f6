//! Hilbert-space GP trajectory prior over position and velocity.
//!
//! A scalar velocity GP is approximated with a finite sine basis; integrating
//! the basis in closed form yields the position process and the position /
//! velocity cross-covariance, so the stacked `[x; v]` trajectory is jointly
//! Gaussian. Degrees of freedom are treated independently.

mod hsgp;
mod joint;

pub use hsgp::{
    basis_function, integrated_basis, spectral_density, velocity_kernel, HsgpSpec, KernelFamily,
    TimeGrid,
};
pub use joint::{
    build_joint_prior, condition_prior, joint_covariance, prior_quadratic_form, sample_prior,
    BoundaryCondition, CovarianceBlocks, Gaussian, JointGpPrior, Observation, ObservationKind,
};
