//! Dense reverse-mode automatic differentiation over 64-bit tensors.
//!
//! Values live on a [`Tape`]; every op appends a node and [`Tape::backward`]
//! walks the nodes in reverse, visiting each exactly once. Parameters are
//! kept outside the tape in a [`ParamStore`] and bound as leaves for each
//! forward pass, which keeps a tape confined to one thread while distinct
//! tapes (and cloned stores) can run in parallel.

mod checkpoint;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use checkpoint::{ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{central_difference, grad_check, max_relative_error, op_suites, SuiteResult};
pub use tape::{Tape, Var, MASK_LARGE};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingParam(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> AdError {
    AdError::Shape {
        op,
        detail: detail.into(),
    }
}

#[cfg(test)]
mod tests;
