use thiserror::Error;

/// Errors produced by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {what} = {value} outside [-{radius}, {radius}]")]
    Domain {
        what: &'static str,
        value: f64,
        radius: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("covariance not positive definite after jitter {jitter:e} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { jitter: f64, min_eigenvalue: f64 },

    #[error(transparent)]
    Kkt(#[from] KktError),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures of a single KKT solve. `SingularSchur` tells the caller to raise
/// the damping and retry.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KktError {
    #[error("Schur complement singular (damping {damping:e})")]
    SingularSchur { damping: f64 },
    #[error("factorization of damped Hessian failed (damping {damping:e})")]
    Factorization { damping: f64 },
    #[error("input Hessian is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("inconsistent KKT dimensions: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
