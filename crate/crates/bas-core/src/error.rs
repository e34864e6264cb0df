//! Error types shared across the pipeline.

use std::fmt;
use std::io;

/// Every failure the library can report.
///
/// The variants map onto the process exit codes used by the CLI:
/// data/format problems (including checkpoint corruption) are recoverable
/// input errors, numeric problems indicate the computation itself went bad.
#[derive(Debug)]
pub enum Error {
    /// Tensor shape mismatch; the message names both shapes.
    Shape(String),
    /// Non-finite values or a failed numeric check.
    Numeric(String),
    /// Invalid run configuration.
    Config(String),
    /// Semantically invalid input (bad label, empty dataset, overlapping spans).
    Data(String),
    /// Malformed input file; `line` is 1-based when known.
    Format {
        line: Option<usize>,
        message: String,
    },
    /// Checkpoint file does not start with the expected magic bytes.
    CheckpointMagic,
    /// Checkpoint magic matched but the format version byte did not.
    CheckpointVersion {
        found: u8,
        expected: u8,
    },
    /// Checkpoint tensor has an unexpected shape or byte count.
    CheckpointShape {
        name: String,
        message: String,
    },
    /// Checkpoint file ended in the middle of the named tensor record.
    CheckpointTruncated {
        name: String,
    },
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric: {msg}"),
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Data(msg) => write!(f, "data: {msg}"),
            Error::Format {
                line: Some(line),
                message,
            } => {
                write!(f, "format: line {line}: {message}")
            }
            Error::Format {
                line: None,
                message,
            } => write!(f, "format: {message}"),
            Error::CheckpointMagic => write!(f, "checkpoint: bad magic bytes"),
            Error::CheckpointVersion { found, expected } => {
                write!(f, "checkpoint: version {found} (expected {expected})")
            }
            Error::CheckpointShape { name, message } => {
                write!(f, "checkpoint: tensor '{name}': {message}")
            }
            Error::CheckpointTruncated { name } => {
                write!(f, "checkpoint: truncated while reading tensor '{name}'")
            }
            Error::Io(err) => write!(f, "io: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line: Some(line),
            message: msg.into(),
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            line: None,
            message: msg.into(),
        }
    }
}
