//! Differentiable tensor operations. Most are inherent methods on
//! [`Tensor`](crate::Tensor); `elementwise` is also exposed as a free function.

mod elementwise;
pub(crate) mod gemm;
mod linalg;
mod rows;
pub(crate) mod spatial;

pub use elementwise::{elementwise, BinaryKind};
pub use rows::LAYER_NORM_EPS;
