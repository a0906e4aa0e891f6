//! Particle-based Stein variational machinery: trajectory kernel, SVGD
//! direction, block-diagonal SVN operator, per-particle BFGS curvature,
//! annealing and the kernelized Stein discrepancy diagnostic.

mod anneal;
mod bfgs;
mod direction;
mod kernel;
mod ksd;
mod particles;

pub use anneal::anneal_scale;
pub use bfgs::{bfgs_update, bfgs_update_in_place, BfgsState, CURVATURE_TOL};
pub use direction::{svgd_direction, svgd_directions, svn_block_hessian, svn_hessian_at};
pub use kernel::{trajectory_kernel, KernelBlock, KernelGram, MetricKind, TrajectoryKernelSpec};
pub use ksd::ksd;
pub use particles::ParticleSet;
