//! The full classifier: embedding → two same-padded convolutions →
//! bidirectional LSTM → tanh dense layer → softmax dense layer.
//!
//! ```text
//! tokens (mLen)
//!   embed            (mLen, n)      fixed pretrained vectors
//!   reshape          (mLen, n, 1)
//!   conv1 + relu     (mLen, n, k1)  → dropout
//!   conv2 (linear)   (mLen, n, 1)   → dropout
//!   reshape          (mLen, n)
//!   bi-lstm          (2h)           → dropout
//!   dense + tanh     (dense)        → dropout
//!   dense + softmax  (classes)
//! ```

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{
    bilstm_backward, bilstm_forward, conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, embed_lookup, relu_backward, softmax_xent_loss, tanh_backward, Activation, BiLstmCache,
    Conv2DParams, DenseParams, LSTMParams,
};
use crate::optim::{xavier_normal_init, Parameters};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token sequence length (mLen).
    pub max_len: usize,
    /// Word-vector dimension (n).
    pub embed_dim: usize,
    pub conv1_filters: usize,
    /// Must be 1 so the conv stack can be reshaped back to (mLen, n).
    pub conv2_filters: usize,
    pub kernel: (usize, usize),
    /// Hidden size per LSTM direction.
    pub lstm_hidden: usize,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Full-size network: 110 tokens of 200-d GloVe vectors, 64 + 1 3×3
    /// filters, 1024 hidden units per LSTM direction, 200 dense units, 50
    /// classes, dropout 0.5.
    pub fn paper() -> Self {
        ModelConfig {
            max_len: 110,
            embed_dim: 200,
            conv1_filters: 64,
            conv2_filters: 1,
            kernel: (3, 3),
            lstm_hidden: 1024,
            dense_hidden: 200,
            num_classes: 50,
            dropout_rate: 0.5,
        }
    }

    /// Desk-scale network used by tests and quick experiments.
    pub fn toy() -> Self {
        ModelConfig {
            max_len: 6,
            embed_dim: 5,
            conv1_filters: 2,
            conv2_filters: 1,
            kernel: (3, 3),
            lstm_hidden: 3,
            dense_hidden: 4,
            num_classes: 4,
            dropout_rate: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "toy" => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_len", self.max_len),
            ("embed_dim", self.embed_dim),
            ("conv1_filters", self.conv1_filters),
            ("lstm_hidden", self.lstm_hidden),
            ("dense_hidden", self.dense_hidden),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if self.conv2_filters != 1 {
            return Err(Error::Config(format!(
                "conv2_filters must be 1 to reshape to (mLen, n), got {}",
                self.conv2_filters
            )));
        }
        let (kh, kw) = self.kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!("kernel must have odd extents, got {kh}x{kw}")));
        }
        if kh > self.max_len || kw > self.embed_dim {
            return Err(Error::Config(format!(
                "kernel {kh}x{kw} larger than input {}x{}",
                self.max_len, self.embed_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

/// Every trainable tensor of the network. Also used to hold gradients,
/// which mirror the parameter shapes exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    pub conv1: Conv2DParams<S>,
    pub conv2: Conv2DParams<S>,
    pub lstm_fwd: LSTMParams<S>,
    pub lstm_bwd: LSTMParams<S>,
    pub fc1: DenseParams<S>,
    pub fc2: DenseParams<S>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (kh, kw) = cfg.kernel;
        let h = cfg.lstm_hidden;
        ModelParams {
            conv1: Conv2DParams::zeros(cfg.conv1_filters, kh, kw, 1),
            conv2: Conv2DParams::zeros(cfg.conv2_filters, kh, kw, cfg.conv1_filters),
            lstm_fwd: LSTMParams::zeros(h, cfg.embed_dim),
            lstm_bwd: LSTMParams::zeros(h, cfg.embed_dim),
            fc1: DenseParams::zeros(cfg.dense_hidden, 2 * h),
            fc2: DenseParams::zeros(cfg.num_classes, cfg.dense_hidden),
        }
    }

    /// Xavier-normal weights and zero biases. Convolution fans count the
    /// receptive field (kh·kw·c_in in, kh·kw·k out); LSTM gate matrices use
    /// (h + n) in and h out.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut p = Self::zeros(cfg);
        let (kh, kw) = cfg.kernel;
        let (h, n) = (cfg.lstm_hidden, cfg.embed_dim);
        for conv in [&mut p.conv1, &mut p.conv2] {
            let (k, c_in) = (conv.filters(), conv.in_channels());
            conv.kernels = xavier_normal_init(conv.kernels.shape(), kh * kw * c_in, kh * kw * k, rng)?;
        }
        for lstm in [&mut p.lstm_fwd, &mut p.lstm_bwd] {
            for w in [&mut lstm.w_f, &mut lstm.w_u, &mut lstm.w_o, &mut lstm.w_c] {
                *w = xavier_normal_init(w.shape(), h + n, h, rng)?;
            }
        }
        for fc in [&mut p.fc1, &mut p.fc2] {
            fc.w = xavier_normal_init(fc.w.shape(), fc.in_features(), fc.out_features(), rng)?;
        }
        Ok(p)
    }

    /// (name, tensor) for every parameter, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = vec![
            ("conv1.kernels".to_string(), &self.conv1.kernels),
            ("conv1.bias".to_string(), &self.conv1.bias),
            ("conv2.kernels".to_string(), &self.conv2.kernels),
            ("conv2.bias".to_string(), &self.conv2.bias),
        ];
        for (prefix, lstm) in [("lstm_fwd", &self.lstm_fwd), ("lstm_bwd", &self.lstm_bwd)] {
            for (name, t) in LSTMParams::<S>::NAMES.iter().zip(lstm.tensors()) {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.extend([
            ("fc1.w".to_string(), &self.fc1.w),
            ("fc1.b".to_string(), &self.fc1.b),
            ("fc2.w".to_string(), &self.fc2.w),
            ("fc2.b".to_string(), &self.fc2.b),
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Check every tensor's shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::<S>::zeros(cfg);
        for ((name, got), (_, want)) in self.named_tensors().into_iter().zip(expected.named_tensors()) {
            if got.dims() != want.dims() {
                return Err(Error::Dimension {
                    op: "model parameters",
                    left: format!("{name} {:?}", got.shape()),
                    right: format!("{:?}", want.shape()),
                });
            }
        }
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for ModelParams<S> {
    fn tensors(&self) -> Vec<&Tensor<S>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = vec![
            &mut self.conv1.kernels,
            &mut self.conv1.bias,
            &mut self.conv2.kernels,
            &mut self.conv2.bias,
        ];
        out.extend(self.lstm_fwd.tensors_mut());
        out.extend(self.lstm_bwd.tensors_mut());
        out.extend([&mut self.fc1.w, &mut self.fc1.b, &mut self.fc2.w, &mut self.fc2.b]);
        out
    }
}

/// Forward-pass mode. Dropout is only active in `Train`.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Infer,
}

struct Dropped<S> {
    out: Tensor<S>,
    mask: Tensor<S>,
}

/// Activations kept for the backward pass.
struct ForwardCache<S> {
    conv_in: Tensor<S>,
    conv1_out: Tensor<S>,
    drop1: Dropped<S>,
    drop2: Dropped<S>,
    lstm_in: Tensor<S>,
    bilstm: BiLstmCache<S>,
    drop3: Dropped<S>,
    fc1_out: Tensor<S>,
    drop4: Dropped<S>,
    logits: Tensor<S>,
}

/// A configured network with its parameters and fixed embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct ServeNet<S> {
    pub config: ModelConfig,
    pub params: ModelParams<S>,
    pub embedding: EmbeddingTable<S>,
}

impl<S: Scalar> ServeNet<S> {
    pub fn new(config: ModelConfig, params: ModelParams<S>, embedding: EmbeddingTable<S>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        if embedding.dim() != config.embed_dim {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match embed_dim {}",
                embedding.dim(),
                config.embed_dim
            )));
        }
        Ok(ServeNet {
            config,
            params,
            embedding,
        })
    }

    fn run_forward(&self, tokens: &[usize], mode: Mode<'_>) -> Result<ForwardCache<S>> {
        let cfg = &self.config;
        if tokens.len() != cfg.max_len {
            return Err(Error::dims("token sequence", tokens.len(), cfg.max_len));
        }
        let (training, mut rng) = match mode {
            Mode::Train(rng) => (true, Some(rng)),
            Mode::Infer => (false, None),
        };
        let rate = cfg.dropout_rate;
        let mut drop = |x: &Tensor<S>| -> Result<Dropped<S>> {
            match rng.as_deref_mut() {
                Some(r) => {
                    let (out, mask) = dropout(x, rate, r, training)?;
                    Ok(Dropped { out, mask })
                }
                None => Ok(Dropped {
                    out: x.clone(),
                    mask: Tensor::filled(x.dims(), S::one()),
                }),
            }
        };

        let (m, n) = (cfg.max_len, cfg.embed_dim);
        let conv_in = embed_lookup(tokens, &self.embedding)?.into_shape(vec![m, n, 1])?;
        let conv1_out = conv2d_forward(&conv_in, &self.params.conv1, Activation::Relu)?;
        let drop1 = drop(&conv1_out)?;
        let conv2_out = conv2d_forward(&drop1.out, &self.params.conv2, Activation::Linear)?;
        let drop2 = drop(&conv2_out)?;
        let lstm_in = drop2.out.reshape(vec![m, n])?;
        let (hidden, bilstm) = bilstm_forward(&lstm_in, &self.params.lstm_fwd, &self.params.lstm_bwd)?;
        let drop3 = drop(&hidden)?;
        let fc1_out = dense_forward(&drop3.out, &self.params.fc1, Activation::Tanh)?;
        let drop4 = drop(&fc1_out)?;
        let logits = dense_forward(&drop4.out, &self.params.fc2, Activation::Linear)?;
        Ok(ForwardCache {
            conv_in,
            conv1_out,
            drop1,
            drop2,
            lstm_in,
            bilstm,
            drop3,
            fc1_out,
            drop4,
            logits,
        })
    }

    /// Class probabilities for one padded token sequence of length mLen.
    pub fn forward(&self, tokens: &[usize], mode: Mode<'_>) -> Result<Tensor<S>> {
        let cache = self.run_forward(tokens, mode)?;
        Ok(crate::nn::softmax(&cache.logits))
    }

    /// Cross-entropy loss against `target` and the gradient of every
    /// parameter. Dropout masks are drawn from `rng`.
    pub fn backward(&self, tokens: &[usize], target: usize, rng: &mut dyn RngCore) -> Result<(S, ModelParams<S>)> {
        let (loss, grads, _) = self.backward_with_probs(tokens, target, rng)?;
        Ok((loss, grads))
    }

    /// As [`ServeNet::backward`], also returning the train-mode probabilities.
    pub fn backward_with_probs(
        &self,
        tokens: &[usize],
        target: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(S, ModelParams<S>, Tensor<S>)> {
        let c = self.run_forward(tokens, Mode::Train(rng))?;
        let p = &self.params;
        let rate = self.config.dropout_rate;

        let (loss, d_logits) = softmax_xent_loss(&c.logits, target)?;
        let mut probs = d_logits.clone();
        probs.data_mut()[target] += S::one();

        let g_fc2 = dense_backward(&c.drop4.out, &p.fc2, &d_logits)?;
        let d_fc1_out = dropout_backward(&g_fc2.input, &c.drop4.mask, rate)?;
        let d_fc1_pre = tanh_backward(&c.fc1_out, &d_fc1_out)?;
        let g_fc1 = dense_backward(&c.drop3.out, &p.fc1, &d_fc1_pre)?;
        let d_hidden = dropout_backward(&g_fc1.input, &c.drop3.mask, rate)?;
        let (g_fwd, g_bwd, d_lstm_in) = bilstm_backward(&c.bilstm, &p.lstm_fwd, &p.lstm_bwd, &d_hidden)?;
        debug_assert_eq!(d_lstm_in.dims(), c.lstm_in.dims());
        let d_conv2_out = dropout_backward(&d_lstm_in.into_shape(c.drop2.mask.dims().to_vec())?, &c.drop2.mask, rate)?;
        let g_conv2 = conv2d_backward(&c.drop1.out, &p.conv2, &d_conv2_out)?;
        let d_conv1_out = dropout_backward(&g_conv2.input, &c.drop1.mask, rate)?;
        let d_conv1_pre = relu_backward(&c.conv1_out, &d_conv1_out)?;
        let g_conv1 = conv2d_backward(&c.conv_in, &p.conv1, &d_conv1_pre)?;

        let grads = ModelParams {
            conv1: g_conv1.params,
            conv2: g_conv2.params,
            lstm_fwd: g_fwd,
            lstm_bwd: g_bwd,
            fc1: g_fc1.params,
            fc2: g_fc2.params,
        };
        Ok((loss, grads, probs))
    }

    /// Intermediate shapes of an inference pass, outermost stage first.
    pub fn shape_trace(&self, tokens: &[usize]) -> Result<Vec<Vec<usize>>> {
        let c = self.run_forward(tokens, Mode::Infer)?;
        Ok(vec![
            c.conv_in.dims()[..2].to_vec(),
            c.conv_in.dims().to_vec(),
            c.conv1_out.dims().to_vec(),
            c.drop2.out.dims().to_vec(),
            c.lstm_in.dims().to_vec(),
            c.drop3.out.dims().to_vec(),
            c.fc1_out.dims().to_vec(),
            c.logits.dims().to_vec(),
        ])
    }
}
