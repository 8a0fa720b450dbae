//! Reverse-mode differentiation over 4-D arrays.
//!
//! Only the operators the generator needs are provided: strided 2-D
//! convolution, nearest-neighbour upsampling, LeakyReLU, sigmoid, batch
//! normalization with batch statistics, channel concatenation and the masked
//! squared-error loss. Every forward call records a node on a [`Tape`];
//! [`Tape::backward`] walks the nodes in exact reverse order.

mod adam;
mod gemm;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ConvSpec, Padding, Shape4, Tensor4};
