//! Crate-wide error type. Shape mismatches in the numeric kernels are
//! treated as fatal programming errors and panic with both shapes named;
//! everything recoverable at run time flows through [`Error`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file content.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Structurally valid input that violates a domain invariant.
    #[error("validation error at line {line}: {rule}")]
    Validation { line: u64, rule: String },

    /// Invalid configuration detected before any compute.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values produced during numeric work (divergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Operation invoked on a model that is not in a usable state.
    #[error("state error: {0}")]
    State(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
