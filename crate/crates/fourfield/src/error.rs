//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape does not match the number of values supplied.
    #[error("shape {shape:?} implies {expected} values, got {got}")]
    CountMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    /// A NaN or infinity was produced (or supplied) during evaluation.
    #[error("non-finite value in `{op}`")]
    NonFinite { op: &'static str },

    /// Operand shapes are incompatible for the requested operation.
    #[error("shape mismatch in `{op}`: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// An axis or index range is out of bounds.
    #[error("out of bounds in `{op}`: {details}")]
    OutOfBounds { op: &'static str, details: String },

    /// `backward` was called on a tensor with more than one element.
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// A domain argument fell outside its valid interval.
    #[error("{what} = {value} outside valid range {range}")]
    DomainError {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    /// Unknown enum-like mode string in a config or CLI argument.
    #[error("unknown {what}: `{value}`")]
    UnknownMode { what: &'static str, value: String },

    /// Config text could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// A corpus directory is empty or inconsistent with its manifest.
    #[error("corpus error: {0}")]
    Corpus(String),

    /// Checkpoint file is truncated or malformed.
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    /// Checkpoint was written by an incompatible format version.
    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// A stored tensor's shape disagrees with the model being restored.
    #[error("checkpoint shape mismatch for `{name}`: file {found:?}, model {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    /// Training aborted because a loss component went non-finite.
    #[error("NaN/Inf in loss component `{component}` at step {step}")]
    NanLoss { component: &'static str, step: u64 },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
