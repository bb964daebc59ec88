//! Neural text classification from first principles: dense tensors with
//! reverse-mode autodiff, convolutional and recurrent layers, a Vietnamese
//! text preprocessing pipeline, pre-trained embedding loading, and a training
//! and evaluation harness for 3-class comment moderation (clean / offensive /
//! hate).

pub mod checkpoint;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod text;
pub mod train;
pub mod util;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use params::{Binding, ParamId, ParamStore};
pub use rng::RngState;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single precision, the training element type.
pub type Tensor32 = Tensor<f32>;
/// Double precision, used by the gradient-check mirror mode.
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
