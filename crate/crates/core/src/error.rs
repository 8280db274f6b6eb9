use thiserror::Error;

/// Errors produced by the library.
///
/// Rejected inputs, failed validations and numerical breakdowns all map onto
/// this enum. Falsification outcomes (a bound that does not hold) are *not*
/// errors; they are reported through the various report types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel row validation failed for measure #{measure_index}, row {row}: {reason}")]
    RowValidation {
        measure_index: usize,
        row: usize,
        reason: String,
    },

    #[error("kernel produced an invalid matrix at step {step}: {reason}")]
    KernelFailure { step: usize, reason: String },

    #[error("expression error at position {position}: {message}")]
    Expression { position: usize, message: String },

    #[error("simulation blew up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
