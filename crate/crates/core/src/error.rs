use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical routine produced or encountered non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A text payload (CSV cell, header) could not be parsed.
    /// Row and column are zero-based data coordinates.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    /// A persisted artifact has the wrong version, is truncated, or is
    /// otherwise unreadable.
    #[error("format error: {0}")]
    Format(String),
    /// An operation was invoked on an object in the wrong state, e.g. a
    /// replay source whose model snapshot cannot be resolved.
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let (row, col) = match e.position() {
            Some(p) => (p.record() as usize, 0),
            None => (0, 0),
        };
        match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::Parse { row, col, msg: format!("i/o failure while reading csv: {e}") }
            }
            _ => Error::Parse { row, col, msg: e.to_string() },
        }
    }
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }
}
