use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mask does not conform to the shuffled block-wise pattern: {0}")]
    NonConformantMask(String),

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("bad convolution geometry: {0}")]
    BadGeometry(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("bad magic: expected \"SMX1\"")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::BadParams(msg.into())
    }
}
