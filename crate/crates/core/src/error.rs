use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mesh connectivity or shape is inconsistent.
    #[error("structural error: {0}")]
    Structure(String),

    /// A caller-supplied argument is out of its valid range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Arithmetic would be undefined (division by zero, non-positive mass).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Not enough (or degenerate) samples for a statistic.
    #[error("statistics error: {0}")]
    Statistics(String),

    /// Malformed input file. `offset` is the byte position where decoding failed, when known.
    #[error("input error{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Input { offset: Option<u64>, message: String },

    /// A caller broke an ordering or grouping contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn input(offset: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Input {
            offset: offset.into(),
            message: message.into(),
        }
    }
}
