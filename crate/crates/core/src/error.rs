use thiserror::Error;

#[derive(Debug, Error)]
pub enum DefenceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing feature for window centred at ({cx}, {cy})")]
    MissingFeature { cx: i64, cy: i64 },

    #[error("problem has no data: {0}")]
    NoData(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DefenceError {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        DefenceError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = DefenceError> = std::result::Result<T, E>;
