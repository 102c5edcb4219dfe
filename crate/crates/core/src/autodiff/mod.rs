//! Minimal reverse-mode automatic differentiation over dense f64 tensors.

mod optim;
mod tape;
mod tensor;

pub use optim::{Optimizer, OptimizerKind, Param, ParamId, ParamSet, TapeBinding};
pub use tape::{Tape, TensorId};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
