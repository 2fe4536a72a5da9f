use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters (window size, basis size, fence factor, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or non-finite input data, or curves on mismatched grids.
    #[error("data error: {0}")]
    Data(String),

    /// Caller passed an argument outside the operation's domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// A time-slot query that the snapshot catalog cannot answer.
    #[error("query error: {0}")]
    Query(String),

    /// Two snapshots whose cluster states cannot be differenced.
    #[error("inconsistency error: {0}")]
    Inconsistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Query(_) | Error::Inconsistency(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
