use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file could not be parsed.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// A parameter violates its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation that requires observations received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A model evaluation was requested outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two curves that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A numerical routine failed to meet its contract.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
