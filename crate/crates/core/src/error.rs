use thiserror::Error;

use crate::lambertw::Branch;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("ragged input at row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite (pivot {pivot} is {value:e}); lambda may be too small for this sigma")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("symmetric eigensolver did not converge")]
    EigenNotConverged,

    #[error("Lambert W argument {x} is outside the domain of the {branch:?} branch")]
    LambertDomain { x: f64, branch: Branch },

    #[error("lambda = {lambda} exceeds the stationary-point threshold 2n*e^(-3/2) = {threshold}")]
    AboveThreshold { lambda: f64, threshold: f64 },

    #[error("every (sigma, fold) evaluation in the cross-validation grid failed")]
    AllGridPointsFailed,
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to failures of a numerical computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::RaggedRow { .. }
                | Error::NonFinite { .. }
                | Error::ModelFormat(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
