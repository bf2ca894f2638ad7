//! Minimal dense tensors with reverse-mode differentiation.
//!
//! Everything runs in `f64`. Parameters live in a [`ParamStore`]; a [`Tape`]
//! borrows the store for one forward pass and `backward` returns a
//! [`Gradients`] keyed by [`ParamId`]. Embedding lookups read the store
//! directly and scatter-add their gradients.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::Tensor;
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{bce_with_logits, sigmoid, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward called on an inference tape")]
    NotRecording,
}
