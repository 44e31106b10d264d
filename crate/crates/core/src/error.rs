use thiserror::Error;

use crate::data::FormatError;

pub type Result<T> = std::result::Result<T, BianError>;

#[derive(Debug, Error)]
pub enum BianError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("training: {0}")]
    Training(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BianError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        BianError::Shape { op, lhs, rhs }
    }
}
