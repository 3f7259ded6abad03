//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by simulation and verification routines.
#[derive(Debug, Error)]
pub enum SimError {
    /// A parameter is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two paths or processes were combined but live on different time grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A vector or matrix dimension disagrees with the expected one.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An ensemble instance violates a hypothesis it was required to satisfy.
    #[error("instance rejected: {0}")]
    RejectedInstance(String),

    /// A censored path was passed to an operation that needs absorption.
    #[error("censored path: {0}")]
    CensoredPath(String),

    /// The censored fraction of an ensemble exceeded the configured bound.
    #[error("censored fraction {fraction:.3e} exceeds bound {bound:.3e}; raise t_max_factor or the bound")]
    CensoringExceeded { fraction: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, SimError>;
