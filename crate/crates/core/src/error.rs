use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max |A_ij - A_ji| = {max_asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { max_asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}")]
    NotPsd { lambda_min: f64, lambda_max: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("rank {k} out of range 0..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("invalid Schatten exponent p = {0} (need p >= 1)")]
    InvalidP(f64),

    #[error("function {function} is not defined at {x:e}")]
    DomainError { function: String, x: f64 },

    #[error("{function} violates {clause} at {inputs}: margin {margin:e}")]
    PropertyViolation {
        function: String,
        clause: String,
        inputs: String,
        margin: f64,
    },

    #[error("hypothesis of {theorem} not met: {reason}")]
    HypothesisNotMet { theorem: String, reason: String },

    #[error("{id}: recomputed {measured} contradicts published value {expected}")]
    MismatchWithPaper {
        id: String,
        measured: f64,
        expected: String,
    },

    #[error("invalid sketch configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown function {0:?}")]
    UnknownFunction(String),

    #[error("decomposition failed to converge: {0}")]
    Convergence(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
