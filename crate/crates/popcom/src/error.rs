use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A line in an input file could not be parsed.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// An input file violates the expected layout (e.g. ragged attribute rows).
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    /// Invalid argument or data handed to an operation.
    #[error("invalid input: {0}")]
    Input(String),

    /// An iterative numerical procedure failed or produced non-finite values.
    #[error("numerical failure in {context}: {message}")]
    Numerical {
        context: &'static str,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            message: message.into(),
        }
    }
}
