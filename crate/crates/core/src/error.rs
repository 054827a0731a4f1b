use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used for CLI exit codes and diagnostic prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Degenerate,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Degenerate => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dimension: {0}")]
    EmptyDimension(String),

    #[error("frequency index {index} out of range for length {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("the 5-band dyadic scheme needs n >= 17 (got n = {n}); supply explicit index ranges such as \"0-1,8-15\" instead")]
    UnsupportedLength { n: usize },

    #[error("unknown band `{0}`")]
    UnknownBand(String),

    #[error("invalid band spec token `{token}`: {reason}")]
    BandSpec { token: String, reason: String },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("trailing bytes: {0}")]
    TrailingBytes(String),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateVector(_) | Error::DegenerateDirection(_) => ErrorClass::Degenerate,
            Error::Usage(_) | Error::UnsupportedLength { .. } | Error::BandSpec { .. } | Error::UnknownBand(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}
