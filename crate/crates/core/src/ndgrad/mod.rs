//! Dense tensors, a reverse-mode gradient tape, and the special functions the
//! evidential loss needs.

mod check;
mod graph;
pub mod special;
mod tensor;

pub use check::{grad_check, GradCheck};
pub use graph::{log_sum_exp, GradNode, Gradients, Graph, Var};
pub use special::{digamma, exprel, lgamma, trigamma};
pub use tensor::{sigmoid, softplus, Tensor};
