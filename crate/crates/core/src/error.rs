use thiserror::Error;

/// Errors raised by the statistics, estimation and testing routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("column {column} has zero sample variance")]
    DegenerateColumn { column: usize },

    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },

    #[error("sample correlation matrix is singular (N = {n_obs}, p = {p})")]
    SingularCorrelation { n_obs: usize, p: usize },

    #[error("{k}-factor model is saturated for p = {p}: degrees of freedom {df} <= 0")]
    ModelSaturated { k: usize, p: usize, df: i64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("unknown discretization setting `{0}` (expected I, II or III)")]
    UnknownSetting(String),

    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;
