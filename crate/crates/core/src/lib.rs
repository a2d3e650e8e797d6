//! A from-scratch CNN + bidirectional-LSTM text classifier for web-service
//! descriptions, with the data preparation, split comparison and top-N
//! evaluation that go with it.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what
//! training, checkpoints and gradient checks use.

pub mod baseline;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod tensor;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type EmbeddingTable = data::EmbeddingTable<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ServeNet = model::ServeNet<f64>;
pub type AdamState = optim::AdamState<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;

/// Seeded generator used for every random draw. ChaCha8 streams are
/// identical across platforms, which keeps runs reproducible.
pub type SeededRng = rand_chacha::ChaCha8Rng;
