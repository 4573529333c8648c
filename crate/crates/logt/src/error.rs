//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {col} has norm {norm:.3e}, below the zero threshold")]
    ZeroVector { col: usize, norm: f64 },

    #[error("non-finite value at column {col}")]
    NonFinite { col: usize },

    #[error("column {col} has norm {norm} but unit norm is required")]
    NotUnitNorm { col: usize, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("decoder support is empty")]
    EmptySupport,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("decoder has no cascade split")]
    NoCascade,

    #[error("query {0} has an empty relevant set; average precision is undefined")]
    EmptyRelevant(usize),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("index format version {got} unsupported (expected {expected})")]
    VersionMismatch { expected: u32, got: u32 },

    #[error("checksum failure in section `{0}`")]
    ChecksumFailure(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
