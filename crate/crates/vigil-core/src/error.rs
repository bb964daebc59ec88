//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes; carries both offending shapes.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// API contract violated by the caller (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("config: {0}")]
    Config(String),

    /// Bad input data (labels, token ids, dataset rows).
    #[error("data: {0}")]
    Data(String),

    /// Malformed input file, with the 1-based line it was detected on.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// The finite-difference oracle was misused (non-deterministic target).
    #[error("gradient-check misuse: {0}")]
    Oracle(String),

    /// Checkpoint does not match its manifest or is truncated.
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    /// Numerical failure during training (NaN/Inf loss).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
