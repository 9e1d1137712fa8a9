use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range (maximum {max})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        max: f64,
    },
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("outside the density's domain: {0}")]
    Domain(String),
    #[error("sample `{0}` is empty")]
    EmptySample(&'static str),
    #[error("degenerate coverage window: {0}")]
    DegenerateWindow(String),
    #[error("binning cannot reach the expected-count floor: {0}")]
    Binning(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
