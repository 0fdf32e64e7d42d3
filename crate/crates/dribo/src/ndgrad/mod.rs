//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! Everything learned in this crate is built on these pieces: [`Tensor`] is
//! a flat row-major f64 array with a shape, [`Node`] wraps a tensor into a
//! dynamically built computation graph, [`backward`] runs the reverse sweep,
//! and [`ParamRegistry`]/[`Adam`] manage trainable leaves. Gradients
//! accumulate additively across backward calls until `zero_grads`.
//!
//! Elementwise binary ops allow one sanctioned implicit broadcast: the
//! smaller operand's shape must be a suffix of the larger's (leading batch
//! dimensions tile). Everything else goes through the explicit `Broadcast`
//! op or is a shape error, which keeps the backward rules auditable.

mod check;
mod node;
mod optim;
mod registry;
mod tensor;

pub use check::{finite_diff_check, finite_diff_check_params};
pub use node::{apply, backward, concat, stop_gradient, Node, OpKind};
pub use optim::Adam;
pub use registry::ParamRegistry;
pub use tensor::Tensor;
