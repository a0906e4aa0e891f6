//! Constrained Stein variational trajectory optimization with a
//! Hilbert-space Gaussian-process trajectory prior.

// Negated comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod test_macros;

pub mod bench;
pub mod constraints;
pub mod error;
pub mod gp_prior;
pub mod linalg;
pub mod planners;
pub mod problems;
pub mod stein;

pub use error::{Error, KktError, Result};
