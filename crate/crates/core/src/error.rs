use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("softmax row {row} has no valid column")]
    EmptyAttention { row: usize },

    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("token id {id} at position {position} is outside the vocabulary (size {vocab})")]
    OutOfVocab {
        id: usize,
        position: usize,
        vocab: usize,
    },

    #[error("label space mismatch: expected {expected} labels, found {found}")]
    LabelSpaceMismatch { expected: usize, found: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numerical error: {0}")]
    NonFinite(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    /// True for failures caused by arithmetic (non-finite values), as opposed
    /// to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
