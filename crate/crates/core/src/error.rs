use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec stack.
///
/// Variants follow the failure classes of the public operations so callers
/// (notably the CLI exit-code mapping) can tell user/format problems apart
/// from internal failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("graph structure error: {0}")]
    Structure(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("corruption error: {0}")]
    Corruption(String),

    #[error("truncation error: {0}")]
    Truncation(String),
}

impl Error {
    /// Whether the error is caused by user input (bad files, bad config,
    /// mismatched artifacts) rather than an internal failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Unsupported(_)
                | Error::Config(_)
                | Error::Usage(_)
                | Error::Corruption(_)
                | Error::Truncation(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}

pub(crate) use bail;
