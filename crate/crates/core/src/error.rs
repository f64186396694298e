use thiserror::Error;

/// Errors raised by model loading and the numerical pipeline.
#[derive(Debug, Error)]
pub enum KmError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty state space")]
    EmptyStateSpace,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("hypotheses not satisfied: {0}")]
    Hypothesis(String),
    #[error("ambiguous rank decision: {0}")]
    AmbiguousRank(String),
    #[error("newton iteration failed: {0}")]
    Newton(String),
    #[error("not in center subspace: residual {0:.3e}")]
    NotCenter(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("not linearly degenerate")]
    NotLinearlyDegenerate,
    #[error("model not found: {0}")]
    ModelNotFound(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl KmError {
    /// True for failures caused by user input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            KmError::Schema(_)
                | KmError::Dimension(_)
                | KmError::EmptyStateSpace
                | KmError::Config(_)
                | KmError::ModelNotFound(_)
                | KmError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, KmError>;
