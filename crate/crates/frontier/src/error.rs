use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("qp solve failed: {0}")]
    SolverFailure(String),

    #[error("estimator failed: {0}")]
    EstimatorFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FrontierError>;
