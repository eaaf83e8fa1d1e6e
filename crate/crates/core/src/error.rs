use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample has {got} values but the layout expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("image side {got} does not match the expected side {expected}")]
    SideMismatch { expected: usize, got: usize },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("malformed image file: {0}")]
    MalformedImage(String),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("invalid label {0}; expected 0 (benign) or 1 (malign)")]
    InvalidLabel(u64),

    #[error("need more than {k} minority samples for {k} neighbors, got {got}")]
    TooFewSamples { k: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset problem: {0}")]
    Dataset(String),

    #[error("backward called without a preceding forward pass")]
    BackwardWithoutForward,

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
