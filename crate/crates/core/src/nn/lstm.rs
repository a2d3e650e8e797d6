//! LSTM cell, single-direction sequence pass, and the bidirectional wrapper,
//! with backpropagation through time.
//!
//! Each gate weight matrix has shape (h, h + n) and acts on the
//! concatenation `[a_prev, x_t]`:
//!
//! ```text
//! f  = σ(W_f·[a_prev, x_t] + b_f)      forget gate
//! u  = σ(W_u·[a_prev, x_t] + b_u)      update gate
//! o  = σ(W_o·[a_prev, x_t] + b_o)      output gate
//! c̃  = tanh(W_c·[a_prev, x_t] + b_c)   candidate cell
//! c  = f ∗ c_prev + u ∗ c̃
//! a  = o ∗ tanh(c)
//! ```

use crate::error::{Error, Result};
use crate::nn::LayerGradients;
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LSTMParams<S> {
    pub w_f: Tensor<S>,
    pub w_u: Tensor<S>,
    pub w_o: Tensor<S>,
    pub w_c: Tensor<S>,
    pub b_f: Tensor<S>,
    pub b_u: Tensor<S>,
    pub b_o: Tensor<S>,
    pub b_c: Tensor<S>,
}

impl<S: Scalar> LSTMParams<S> {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, hidden + input]);
        let b = || Tensor::zeros(&[hidden]);
        LSTMParams {
            w_f: w(),
            w_u: w(),
            w_o: w(),
            w_c: w(),
            b_f: b(),
            b_u: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.dims()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_f.dims()[1] - self.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        let wd = self.w_f.dims();
        if wd.len() != 2 || wd[1] <= wd[0] {
            return Err(Error::dims("lstm weights", self.w_f.shape(), "(h, h + n)"));
        }
        for w in [&self.w_u, &self.w_o, &self.w_c] {
            if w.dims() != wd {
                return Err(Error::dims("lstm weights", self.w_f.shape(), w.shape()));
            }
        }
        for b in [&self.b_f, &self.b_u, &self.b_o, &self.b_c] {
            if b.dims() != [wd[0]] {
                return Err(Error::dims("lstm bias", b.shape(), wd[0]));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor<S>; 8] {
        [
            &self.w_f, &self.w_u, &self.w_o, &self.w_c, &self.b_f, &self.b_u, &self.b_o, &self.b_c,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 8] {
        [
            &mut self.w_f,
            &mut self.w_u,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_u,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }

    pub const NAMES: [&'static str; 8] = ["w_f", "w_u", "w_o", "w_c", "b_f", "b_u", "b_o", "b_c"];
}

/// Intermediates of one cell step kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache<S> {
    /// `[a_prev, x_t]`
    pub concat: Vec<S>,
    pub c_prev: Vec<S>,
    pub forget: Vec<S>,
    pub update: Vec<S>,
    pub output: Vec<S>,
    pub candidate: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
}

fn gate<S: Scalar>(w: &Tensor<S>, b: &Tensor<S>, z: &[S], f: impl Fn(S) -> S) -> Result<Vec<S>> {
    let mut v = w.matvec(z)?;
    for (vi, &bi) in v.iter_mut().zip(b.data()) {
        *vi = f(*vi + bi);
    }
    Ok(v)
}

fn step_raw<S: Scalar>(x_t: &[S], a_prev: &[S], c_prev: &[S], p: &LSTMParams<S>) -> Result<StepCache<S>> {
    let (h, n) = (p.hidden_size(), p.input_size());
    if x_t.len() != n || a_prev.len() != h || c_prev.len() != h {
        return Err(Error::dims("lstm_step", (x_t.len(), a_prev.len(), c_prev.len()), (n, h, h)));
    }
    let mut concat = Vec::with_capacity(h + n);
    concat.extend_from_slice(a_prev);
    concat.extend_from_slice(x_t);

    let forget = gate(&p.w_f, &p.b_f, &concat, sigmoid)?;
    let update = gate(&p.w_u, &p.b_u, &concat, sigmoid)?;
    let output = gate(&p.w_o, &p.b_o, &concat, sigmoid)?;
    let candidate = gate(&p.w_c, &p.b_c, &concat, |v| v.tanh())?;

    let c: Vec<S> = (0..h).map(|i| forget[i] * c_prev[i] + update[i] * candidate[i]).collect();
    let tanh_c: Vec<S> = c.iter().map(|v| v.tanh()).collect();
    Ok(StepCache {
        concat,
        c_prev: c_prev.to_vec(),
        forget,
        update,
        output,
        candidate,
        c,
        tanh_c,
    })
}

impl<S: Scalar> StepCache<S> {
    pub fn hidden(&self) -> Vec<S> {
        self.output.iter().zip(&self.tanh_c).map(|(&o, &t)| o * t).collect()
    }
}

/// One cell step. Returns the new hidden state, the new cell state and the
/// cache for [`lstm_sequence_backward`].
pub fn lstm_step<S: Scalar>(
    x_t: &Tensor<S>,
    a_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    p: &LSTMParams<S>,
) -> Result<(Tensor<S>, Tensor<S>, StepCache<S>)> {
    p.validate()?;
    let cache = step_raw(x_t.data(), a_prev.data(), c_prev.data(), p)?;
    let a = Tensor::vector(cache.hidden());
    let c = Tensor::vector(cache.c.clone());
    Ok((a, c, cache))
}

/// Everything the backward pass needs from one directional sweep.
#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    /// Step caches in processing order.
    pub steps: Vec<StepCache<S>>,
    pub reverse: bool,
    pub hidden: usize,
    pub input: usize,
}

/// Run the cell over every row of `xs` (shape (T, n)) from zero initial
/// states, front to back or back to front. Returns the final hidden state.
pub fn lstm_sequence_forward<S: Scalar>(
    xs: &Tensor<S>,
    p: &LSTMParams<S>,
    reverse: bool,
) -> Result<(Tensor<S>, LstmCache<S>)> {
    p.validate()?;
    if xs.rank() != 2 || xs.dims()[1] != p.input_size() {
        return Err(Error::dims("lstm sequence", xs.shape(), ("T", p.input_size())));
    }
    let t_len = xs.dims()[0];
    let h = p.hidden_size();
    let mut a = vec![S::zero(); h];
    let mut c = vec![S::zero(); h];
    let mut steps = Vec::with_capacity(t_len);
    for k in 0..t_len {
        let t = if reverse { t_len - 1 - k } else { k };
        let cache = step_raw(xs.row(t), &a, &c, p)?;
        a = cache.hidden();
        c.clone_from(&cache.c);
        steps.push(cache);
    }
    Ok((
        Tensor::vector(a),
        LstmCache {
            steps,
            reverse,
            hidden: h,
            input: p.input_size(),
        },
    ))
}

/// Backpropagation through time from the gradient on the final hidden
/// state. Returns gradients for all eight parameters (summed over steps)
/// and for every row of the input sequence.
pub fn lstm_sequence_backward<S: Scalar>(
    cache: &LstmCache<S>,
    p: &LSTMParams<S>,
    upstream: &Tensor<S>,
) -> Result<LayerGradients<LSTMParams<S>, S>> {
    if cache.steps.is_empty() {
        return Err(Error::State("lstm backward called without a forward cache".into()));
    }
    let (h, n) = (cache.hidden, cache.input);
    if p.hidden_size() != h || p.input_size() != n {
        return Err(Error::State(format!(
            "lstm cache built for h={h}, n={n} but parameters have h={}, n={}",
            p.hidden_size(),
            p.input_size()
        )));
    }
    if upstream.len() != h {
        return Err(Error::dims("lstm upstream", upstream.shape(), h));
    }
    let t_len = cache.steps.len();
    let mut grads = LSTMParams::zeros(h, n);
    let mut dxs = vec![S::zero(); t_len * n];
    let mut da = upstream.data().to_vec();
    let mut dc = vec![S::zero(); h];
    let mut dz_f = vec![S::zero(); h];
    let mut dz_u = vec![S::zero(); h];
    let mut dz_o = vec![S::zero(); h];
    let mut dz_c = vec![S::zero(); h];
    let mut dconcat = vec![S::zero(); h + n];
    let one = S::one();

    for (k, s) in cache.steps.iter().enumerate().rev() {
        for i in 0..h {
            let d_out = da[i] * s.tanh_c[i];
            let dci = dc[i] + da[i] * s.output[i] * (one - s.tanh_c[i] * s.tanh_c[i]);
            let d_forget = dci * s.c_prev[i];
            let d_update = dci * s.candidate[i];
            let d_cand = dci * s.update[i];
            dz_f[i] = d_forget * s.forget[i] * (one - s.forget[i]);
            dz_u[i] = d_update * s.update[i] * (one - s.update[i]);
            dz_o[i] = d_out * s.output[i] * (one - s.output[i]);
            dz_c[i] = d_cand * (one - s.candidate[i] * s.candidate[i]);
            dc[i] = dci * s.forget[i];
        }
        grads.w_f.add_outer(&dz_f, &s.concat);
        grads.w_u.add_outer(&dz_u, &s.concat);
        grads.w_o.add_outer(&dz_o, &s.concat);
        grads.w_c.add_outer(&dz_c, &s.concat);
        for (b, dz) in [
            (&mut grads.b_f, &dz_f),
            (&mut grads.b_u, &dz_u),
            (&mut grads.b_o, &dz_o),
            (&mut grads.b_c, &dz_c),
        ] {
            for (bi, &d) in b.data_mut().iter_mut().zip(dz.iter()) {
                *bi += d;
            }
        }

        dconcat.iter_mut().for_each(|v| *v = S::zero());
        p.w_f.matvec_t_acc(&dz_f, &mut dconcat);
        p.w_u.matvec_t_acc(&dz_u, &mut dconcat);
        p.w_o.matvec_t_acc(&dz_o, &mut dconcat);
        p.w_c.matvec_t_acc(&dz_c, &mut dconcat);

        da.copy_from_slice(&dconcat[..h]);
        let t = if cache.reverse { t_len - 1 - k } else { k };
        dxs[t * n..(t + 1) * n].copy_from_slice(&dconcat[h..]);
    }

    Ok(LayerGradients {
        params: grads,
        input: Tensor::from_vec(vec![t_len, n], dxs)?,
    })
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<S> {
    pub forward: LstmCache<S>,
    pub backward: LstmCache<S>,
}

/// Final hidden states of a front-to-back and a back-to-front sweep,
/// concatenated as `[forward ; backward]` (length 2h).
pub fn bilstm_forward<S: Scalar>(
    xs: &Tensor<S>,
    fwd: &LSTMParams<S>,
    bwd: &LSTMParams<S>,
) -> Result<(Tensor<S>, BiLstmCache<S>)> {
    if fwd.hidden_size() != bwd.hidden_size() || fwd.input_size() != bwd.input_size() {
        return Err(Error::dims("bilstm directions", fwd.w_f.shape(), bwd.w_f.shape()));
    }
    let (a_f, cache_f) = lstm_sequence_forward(xs, fwd, false)?;
    let (a_b, cache_b) = lstm_sequence_forward(xs, bwd, true)?;
    let mut out = a_f.into_data();
    out.extend(a_b.into_data());
    Ok((
        Tensor::vector(out),
        BiLstmCache {
            forward: cache_f,
            backward: cache_b,
        },
    ))
}

/// Returns (forward-direction grads, backward-direction grads, d/dxs).
pub fn bilstm_backward<S: Scalar>(
    cache: &BiLstmCache<S>,
    fwd: &LSTMParams<S>,
    bwd: &LSTMParams<S>,
    upstream: &Tensor<S>,
) -> Result<(LSTMParams<S>, LSTMParams<S>, Tensor<S>)> {
    let h = fwd.hidden_size();
    if upstream.len() != 2 * h {
        return Err(Error::dims("bilstm upstream", upstream.shape(), 2 * h));
    }
    let up_f = Tensor::vector(upstream.data()[..h].to_vec());
    let up_b = Tensor::vector(upstream.data()[h..].to_vec());
    let gf = lstm_sequence_backward(&cache.forward, fwd, &up_f)?;
    let gb = lstm_sequence_backward(&cache.backward, bwd, &up_b)?;
    let dx = gf.input.add(&gb.input)?;
    Ok((gf.params, gb.params, dx))
}
