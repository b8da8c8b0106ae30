use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpaceError>;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("enumeration refused: {estimate} sequences exceeds limit {limit}")]
    Guard { estimate: f64, limit: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SpaceError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        SpaceError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
