//! Dense matrix arithmetic with reverse-mode automatic differentiation
//! and a finite-difference gradient oracle.

mod finite_diff;
mod matrix;
mod tape;

pub use finite_diff::{finite_diff_grad, rel_err};
pub use matrix::{sigmoid, softmax_vec, Matrix};
pub use tape::{Gradients, Tape, Var};
