//! Dense `f64` tensors with a tape-based reverse-mode autodiff.
//!
//! [`Tensor`] is a plain value. Differentiable computations are recorded on a
//! [`Graph`], which hands out [`Var`] handles; [`Graph::backward`] walks the
//! tape in reverse and returns a gradient for every trainable leaf.

mod array;
mod gemm;
mod gradcheck;
mod graph;

pub use array::Tensor;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Mask, Var};

use std::collections::BTreeMap;

/// Named parameter set, ordered by name.
pub type NamedTensors = BTreeMap<String, Tensor>;
