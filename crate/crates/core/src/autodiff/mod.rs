//! Reverse-mode automatic differentiation over rank-2 tensors.

mod gradcheck;
mod sparse;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck, GradCheckReport};
pub use sparse::SparseMatrix;
pub use tape::{Reduce, Tape, Var, LOG_CLAMP, NORM_EPS};
pub use tensor::Tensor;
