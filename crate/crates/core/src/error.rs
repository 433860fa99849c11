use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),

    #[error("integer {0} is outside the supported range [2, 2^63]")]
    OutOfRange(u64),

    #[error("generating-set search exceeded its cap of {cap} {what}")]
    SearchBoundExceeded { what: &'static str, cap: usize },

    #[error("symbol is not in the Gordon-Hedenmalm class: {0}")]
    NotInClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("series cap mismatch: {0} vs {1}")]
    CapMismatch(u32, u32),

    #[error("newton solve failed: {0}")]
    NewtonFailed(String),

    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
