//! Forward and backward passes for every layer in the network.
//!
//! Backward functions take the loss gradient with respect to a layer's
//! pre-activation output. Activation derivatives are applied separately
//! with [`relu_backward`] / [`tanh_backward`] so each layer can be checked
//! in isolation.

mod conv;
mod dense;
mod dropout;
mod embedding;
mod loss;
mod lstm;

pub use conv::{conv2d_backward, conv2d_forward, Conv2DParams};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use dropout::{dropout, dropout_backward};
pub use embedding::embed_lookup;
pub use loss::{cross_entropy, softmax, softmax_xent_loss, PROB_FLOOR};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_sequence_backward, lstm_sequence_forward, lstm_step, BiLstmCache,
    LSTMParams, LstmCache, StepCache,
};

use crate::error::Result;
use crate::scalar::{relu, sigmoid, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub(crate) fn apply_pointwise<S: Scalar>(self, t: Tensor<S>) -> Tensor<S> {
        match self {
            Activation::Linear => t,
            Activation::Relu => t.map(relu),
            Activation::Tanh => t.map(|v| v.tanh()),
            Activation::Sigmoid => t.map(sigmoid),
            Activation::Softmax => softmax(&t),
        }
    }
}

/// Gradients of one layer: a parameter-shaped value `P` holding the
/// parameter gradients, plus the gradient with respect to the layer input.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients<P, S> {
    pub params: P,
    pub input: Tensor<S>,
}

/// Chain `upstream` through a ReLU, given the ReLU's output.
pub fn relu_backward<S: Scalar>(output: &Tensor<S>, upstream: &Tensor<S>) -> Result<Tensor<S>> {
    output.zip_map(upstream, |y, g| if y > S::zero() { g } else { S::zero() })
}

/// Chain `upstream` through a tanh, given the tanh's output.
pub fn tanh_backward<S: Scalar>(output: &Tensor<S>, upstream: &Tensor<S>) -> Result<Tensor<S>> {
    output.zip_map(upstream, |y, g| g * (S::one() - y * y))
}
