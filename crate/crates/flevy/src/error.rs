//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by model construction, synthesis, and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range (non-finite, wrong sign,
    /// exponent out of the open interval it must lie in, off-grid time, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The increment grid does not cover the span a synthesis or statistic
    /// needs.
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),

    /// A precondition that is not a plain parameter-range check failed
    /// (e.g. an operation that requires a symmetric pure-jump model was
    /// handed something else).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input or output files could not be read, written, or parsed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed data file (CSV path file, manifest, ...).
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used throughout the crate for parameter validation.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
