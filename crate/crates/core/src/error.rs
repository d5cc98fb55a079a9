use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the numeric core, the networks and the trainer.
#[derive(Debug, Error)]
pub enum PuffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument to {op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("autograd graph already consumed by an earlier backward pass")]
    GraphConsumed,

    #[error("missing gradient for trainable parameter `{0}`")]
    MissingGrad(String),

    #[error("out_embed mode `random` needs a seeded rng")]
    MissingRng,

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unknown tensor `{0}` in checkpoint")]
    UnknownTensor(String),

    #[error("tensor `{0}` missing from checkpoint")]
    MissingTensor(String),

    #[error("image error for {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PuffError> = std::result::Result<T, E>;

pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> PuffError {
    PuffError::Invalid {
        op,
        msg: msg.into(),
    }
}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> PuffError {
    PuffError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}
