use std::fmt;
use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    Shape(String),
    /// A value violates a documented precondition.
    InvalidInput(String),
    /// Architecture string could not be parsed.
    Parse { offset: usize, message: String },
    /// Model configuration failed validation.
    Config(String),
    /// Integer arithmetic overflowed a 64-bit count.
    Overflow(String),
    /// Malformed tensor container or checkpoint.
    Format(String),
    /// Training diverged.
    NonFiniteLoss { epoch: usize },
    Io(io::Error),
    Json(serde_json::Error),
    Csv(csv::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::Parse { offset, message } => {
                write!(f, "parse error at offset {offset}: {message}")
            }
            Error::Config(m) => write!(f, "invalid model config: {m}"),
            Error::Overflow(m) => write!(f, "arithmetic overflow: {m}"),
            Error::Format(m) => write!(f, "bad file format: {m}"),
            Error::NonFiniteLoss { epoch } => write!(f, "loss became non-finite in epoch {epoch}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            Error::Csv(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::Error::Shape(format!($($arg)*)) };
}
macro_rules! invalid {
    ($($arg:tt)*) => { $crate::Error::InvalidInput(format!($($arg)*)) };
}
pub(crate) use invalid;
pub(crate) use shape_err;
