use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no patches accepted across the batch")]
    EmptyBatch,

    #[error("cannot form triplets: fewer than 2 distinct labels")]
    TooFewClasses,

    #[error("no triplets given; mean loss over zero terms is undefined")]
    EmptyTriplets,

    #[error("degenerate embedding: norm {norm:e} is below the 1e-12 floor")]
    DegenerateEmbedding { norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("node target error: {0}")]
    NodeTarget(String),

    #[error("training stalled after {0} consecutive failed steps")]
    TrainingStalled(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
