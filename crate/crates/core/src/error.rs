use thiserror::Error;

/// Errors shared by every solver module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel invariant violated: {0}")]
    KernelInvariant(String),

    #[error("domain too small: {0}")]
    InsufficientDomain(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("instability detected: {0}")]
    Instability(String),

    #[error("edge leak {leak:.3e} exceeds gate {gate:.3e}")]
    EdgeLeak { leak: f64, gate: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
