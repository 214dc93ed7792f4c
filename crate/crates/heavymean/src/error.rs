//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("constraint matrix {index} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { index: usize, asymmetry: f64 },

    #[error("polynomials belong to different variable sets")]
    VariableSetMismatch,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("degree {required} exceeds relaxation degree {available}")]
    DegreeTooSmall { required: usize, available: usize },

    #[error("moment relaxation needs {count} monomials, cap is {cap}")]
    MonomialCapExceeded { count: usize, cap: usize },

    #[error("psd block side {side} exceeds the dense-solver cap {cap}")]
    PsdDimCapExceeded { side: usize, cap: usize },

    #[error("solver did not reach an optimal or infeasible status: {0}")]
    SolverFailure(String),

    #[error("witness identity residual {residual:e} exceeds tolerance {tol:e}")]
    WitnessResidual { residual: f64, tol: f64 },

    #[error("operation requires status=ok, got a rejected estimate")]
    Rejected,

    #[error("exact oracle only supports dimension <= {max}, got {got}")]
    OracleDimension { max: usize, got: usize },

    #[error("exact 2->1 norm enumeration only supports k <= {max}, got {got}")]
    Norm21Rows { max: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("adaptive radius search failed: every radius was rejected ({trace})")]
    AdaptiveSearchFailed { trace: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
