use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside the domain [{lo}, {hi}] of {what}")]
    OutOfRange {
        what: &'static str,
        value: f32,
        lo: f32,
        hi: f32,
    },

    #[error("unsupported quantizer configuration: {0}")]
    QuantSpec(String),

    #[error("code {code} outside the packable domain of {what}")]
    CodeDomain { what: &'static str, code: i32 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("descriptor error: {0}")]
    Descriptor(String),

    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
