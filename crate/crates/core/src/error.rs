use std::path::PathBuf;

use crate::nlpr::Trace;

/// Errors raised across the simulation, retrieval and reconstruction stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimization failed at iteration {}: {message}", trace.iterations.len())]
    OptimizationFailure { message: String, trace: Box<Trace> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("retrieval failed for views {views:?}: {first}")]
    ViewsFailed { views: Vec<usize>, first: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::InvalidData(_) | Error::Degenerate(_) | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $kind:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::Error::$kind(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
