//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every forward operation as a node. [`Tape::backward`]
//! walks the nodes in reverse creation order, which is a valid topological
//! order because operations can only refer to earlier nodes. There is no
//! broadcasting beyond the bias add of [`Tape::linear`].

mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{sgd_step, zero_grad, Adam};
pub use params::{glorot_uniform, Parameter, ParameterSet};
pub(crate) use tape::cosine_window;
pub use tape::{Segments, Tape, Var};
pub use tensor::Tensor;
