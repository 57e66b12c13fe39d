//! Dense tensors, reverse-mode differentiation and first-order optimizers.
//!
//! Everything runs in double precision on one thread. Models register
//! their weights in a [`ParamStore`], build a [`Graph`] per forward pass,
//! and hand the resulting [`Gradients`] back to the store before an
//! [`Optimizer`] step.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{forward_backward, Graph, NodeId};
pub(crate) use graph::{sigmoid, softmax_rows};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("graph node {node} refers to a node that is not earlier on the tape")]
    Cycle { node: usize },
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { node: usize, op: &'static str },
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("graph builder is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("parameter {0} is missing")]
    MissingParam(String),
    #[error("unexpected parameter {0}")]
    UnexpectedParam(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error("parameter file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}
