use thiserror::Error;

pub type Result<T> = std::result::Result<T, VolError>;

#[derive(Debug, Error)]
pub enum VolError {
    #[error("{op}: dimension mismatch on axis {axis}: {detail}")]
    Dimension {
        op: &'static str,
        axis: String,
        detail: String,
    },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("{op}: degenerate batch, {detail}")]
    DegenerateBatch { op: &'static str, detail: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VolError {
    pub(crate) fn dim(
        op: &'static str,
        axis: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        VolError::Dimension {
            op,
            axis: axis.into(),
            detail: detail.into(),
        }
    }
}
