//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("non-finite probability at index {index}")]
    NonFinite { index: usize },

    #[error("empty distribution")]
    Empty,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("index {index} out of range for size {size}")]
    OutOfRange { index: usize, size: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration of {requested} blocks exceeds the cap of {cap}; switch to sampling")]
    EnumerationLimit { requested: u128, cap: usize },

    #[error("transition matrix is reducible; entropy rate undefined")]
    ReducibleChain,

    #[error("stationary law did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("inner output of length {len} does not fit a block of length {n}")]
    BlockOverflow { len: usize, n: usize },

    #[error("capacity exceeded: {reason} ({unplaced} typical sequences unplaced)")]
    CapacityExceeded { reason: String, unplaced: u128 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid definition at `{path}`: {msg}")]
    Schema { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), msg: msg.into() }
    }
}
