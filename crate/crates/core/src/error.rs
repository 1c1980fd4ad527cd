use thiserror::Error;
use volcore::VolError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] VolError),
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("architecture error at {stage}: {detail}")]
    Architecture { stage: String, detail: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("non-finite {head} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        head: String,
        epoch: usize,
        batch: usize,
    },
    #[error("leakage: {0}")]
    Leakage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
