use thiserror::Error;

/// Errors surfaced by the estimation and monitoring routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Too few cases to determine the parameters.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A linear solve or matrix factorization failed beyond recovery.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input data (used by ingestion front ends).
    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
