//! Dense tensors, a reverse-mode tape over them, parameter storage and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{gelu, gelu_grad, softmax_rows, Activation, Gradients, Graph, Mode, ParamVars, Var};
pub use params::ParamStore;
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests;
