use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an API precondition (shape mismatch, bad axis, empty input).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A hyperparameter or configuration value is outside its valid domain.
    #[error("invalid value: {0}")]
    Domain(String),

    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Input bytes do not match the expected on-disk format.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must agree with each other do not.
    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    /// The data is degenerate for the requested operation (zero variance, empty class).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("invalid state: {0}")]
    State(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
