//! Dense tensors and tape-based reverse-mode differentiation.
//!
//! The operation set is deliberately closed: matmul, transpose, row
//! softmax, row normalization, row log-sum-exp, elementwise add/mul/scale,
//! row gather, sum/mean and row-wise cosine similarity. Everything else in
//! the crate is composed from these.

pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub(crate) use ops::{check_positive, cosine, dot, logsumexp};
pub use tape::{BackwardReport, Tape, Var};
pub use tensor::{Tensor, NORM_EPS};
