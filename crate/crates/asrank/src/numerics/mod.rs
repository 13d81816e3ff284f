//! Dense numerics substrate: row-major arrays, a minimal reverse-mode
//! differentiation graph over whole-array operations, and a central
//! finite-difference gradient checker.
//!
//! Everything downstream (encoder, losses, trainer) is expressed through
//! [`Graph`] so there is exactly one forward implementation to trust, and
//! [`grad_check`] is the independent oracle that keeps its backward pass
//! honest.

mod array;
mod gradcheck;
mod graph;

pub(crate) use array::cast;
pub use array::{layer_norm, matmul, softmax, transpose, Array, Array32, Scalar};
pub use gradcheck::{grad_check, grad_check_with_floor, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
