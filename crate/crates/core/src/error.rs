use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: |A[{row},{col}] - conj(A[{col},{row}])| = {max_asymmetry:e}")]
    NotHermitian {
        max_asymmetry: f64,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: row {row} has {found} entries, expected {expected}")]
    NotSquare {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("frame count mismatch: kernel expects r = {expected}, point has r = {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("phase point violates its constraint (residual {residual:e})")]
    ConstraintViolation { residual: f64 },

    #[error("invalid gamma weight: {0}")]
    InvalidWeight(String),

    #[error("weight violates the self-dual condition: moment = {moment}, required 1")]
    WeightCondition { moment: f64 },

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("state index {index} out of range for F = {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
