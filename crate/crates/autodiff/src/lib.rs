//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The op set is exactly what a small grounding/detection network needs:
//! batched matmul, softmax, layer norm, bilinear sampling, the usual
//! pointwise maps, gathering, and concatenation. Everything is
//! double-precision and deterministic; any op that produces NaN/Inf on
//! finite inputs reports an error instead of propagating it.

mod check;
mod error;
mod optim;
mod tape;
mod tensor;

pub use check::{finite_difference, max_relative_error};
pub use error::{Result, TensorError};
pub use optim::AdamW;
pub use tape::{Tape, Var};
pub use tensor::{broadcast_shape, strides, Tensor};
