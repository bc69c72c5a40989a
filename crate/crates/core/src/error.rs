use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {0} of the frame matrix is zero")]
    ZeroRow(usize),

    #[error("grade {grade} exceeds the maximum grade {max}")]
    GradeOutOfRange { grade: usize, max: usize },

    #[error("rank-deficient frame operator: {0}")]
    RankDeficient(String),

    #[error("reconstruction defect: residual {residual:e} exceeds tolerance {tolerance:e}")]
    ReconstructionDefect { residual: f64, tolerance: f64 },

    #[error("not a Riesz basis: {0}")]
    NotRieszBasis(String),

    #[error("hypothesis violated: {constraint}")]
    Hypothesis { constraint: String },

    #[error("input too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("truncation too short: {0}")]
    Truncation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid matrix file: {0}")]
    MatrixFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
