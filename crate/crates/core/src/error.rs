use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("parameter `{0}` has no gradient; run backward first")]
    MissingGrad(String),

    #[error("expected a flat vector of length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite function value at coordinate {coordinate} (h = {h})")]
    NonFiniteProbe { coordinate: usize, h: f64 },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("not a probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("no perturbation is defined for plain SGD")]
    NoPerturbation,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("run aborted at epoch {epoch}, step {step}: {source}")]
    Aborted {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
