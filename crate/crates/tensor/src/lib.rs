//! A small `f64` tensor library with a reverse-mode tape, enough to train
//! convolutional encoder–decoders and discriminators on the CPU.

pub mod check;
pub mod conv;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
mod tensor;

pub use graph::{Gradients, Graph, ParamKey, Var};
pub use optim::Adam;
pub use params::{Bound, ParamSet};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
