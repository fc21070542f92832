use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or configuration value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A file could not be parsed. `record` names the offending line or entry.
    #[error("format error in {path} at {record}: {message}")]
    Format {
        path: String,
        record: String,
        message: String,
    },

    /// The CTC target needs more frames than the grid provides.
    #[error("infeasible target: {label_len} labels ({repeats} repeats) need {needed} frames, grid has {frames}")]
    InfeasibleTarget {
        label_len: usize,
        repeats: usize,
        needed: usize,
        frames: usize,
    },

    /// The target is feasible but every alignment has zero probability.
    #[error("target has zero likelihood under the grid (all alignments underflow)")]
    ZeroLikelihood,

    /// A persisted artifact does not match what was recorded when it was written.
    #[error("integrity error in {}: {message}", path.display())]
    Integrity { path: PathBuf, message: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(
        path: impl Into<String>,
        record: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            record: record.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn integrity(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Integrity {
            path: path.into(),
            message: message.into(),
        }
    }
}
