use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine, the builders and the operator surface.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a shape or range precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An evaluation produced a NaN or an infinity.
    #[error("non-finite value in {context} at point {point:?}")]
    NonFinite { context: String, point: Vec<f64> },

    /// The line search could not find an admissible step.
    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("invalid configuration key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("observations outside the flow region at rows {indices:?}")]
    ObservationsOutside { indices: Vec<usize> },

    #[error("missing observation file: {0}")]
    MissingObservations(PathBuf),

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
