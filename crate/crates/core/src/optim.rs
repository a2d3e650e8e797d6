//! Xavier initialization, Adam with inverse-time learning-rate decay, and
//! the mini-batch training loop.

use rand::{Rng, RngCore, SeedableRng};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TokenizedService;
use crate::error::{Error, Result};
use crate::metrics::target_rank;
use crate::model::{ModelParams, ServeNet};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::SeededRng;

/// Anything exposing its trainable tensors in a stable order.
pub trait Parameters<S> {
    fn tensors(&self) -> Vec<&Tensor<S>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>>;
}

impl<S> Parameters<S> for Vec<Tensor<S>> {
    fn tensors(&self) -> Vec<&Tensor<S>> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.iter_mut().collect()
    }
}

/// Draw i.i.d. entries from Normal(0, 2 / (fan_in + fan_out)).
pub fn xavier_normal_init<S: Scalar, R: Rng + ?Sized>(
    shape: &Shape,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Tensor<S>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Parameter(format!("xavier fans must be >= 1 (got {fan_in}, {fan_out})")));
    }
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
    let data = (0..shape.numel()).map(|_| S::of(normal.sample(rng))).collect();
    Tensor::from_vec(shape.dims().to_vec(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecaySchedule {
    /// `lr_t = lr₀ / (1 + decay·t)` with t the optimizer step count.
    PerStep,
    /// `lr_e = lr₀ / (1 + decay·e)` with e the 1-based epoch number.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub schedule: DecaySchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            decay: 1e-4,
            epsilon: 1e-8,
            schedule: DecaySchedule::PerStep,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
    /// 1-based epoch used by [`DecaySchedule::PerEpoch`].
    pub epoch: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(config: AdamConfig, params: &impl Parameters<S>) -> Self {
        let zeros: Vec<Tensor<S>> = params.tensors().into_iter().map(Tensor::zeros_like).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
            epoch: 1,
        }
    }

    /// Learning rate used at optimizer step `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        let k = match self.config.schedule {
            DecaySchedule::PerStep => t,
            DecaySchedule::PerEpoch => self.epoch,
        };
        self.config.lr / (1.0 + self.config.decay * k as f64)
    }

    /// Learning rate of the most recent step (or the next one before any step).
    pub fn current_lr(&self) -> f64 {
        self.lr_at(self.step.max(1))
    }

    /// One Adam update of `params` with `grads`.
    pub fn apply(&mut self, params: &mut impl Parameters<S>, grads: &impl Parameters<S>) -> Result<()> {
        let mut ps = params.tensors_mut();
        let gs = grads.tensors();
        if ps.len() != gs.len() || ps.len() != self.m.len() {
            return Err(Error::dims("adam parameter count", ps.len(), (gs.len(), self.m.len())));
        }
        for ((p, g), m) in ps.iter().zip(&gs).zip(&self.m) {
            if p.dims() != g.dims() || p.dims() != m.dims() {
                return Err(Error::dims("adam", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let t = self.step;
        let cfg = &self.config;
        let lr = S::of(self.lr_at(t));
        let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
        let eps = S::of(cfg.epsilon);
        let one = S::one();
        let bc1 = one - S::of(cfg.beta1.powi(t as i32));
        let bc2 = one - S::of(cfg.beta2.powi(t as i32));

        for (i, p) in ps.iter_mut().enumerate() {
            let g = gs[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, theta) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Worker threads for per-sample passes within a batch; 1 runs inline.
    pub threads: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            seed: 42,
            threads: 1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.threads == 0 {
            return Err(Error::Config("epochs, batch_size and threads must be >= 1".into()));
        }
        let a = &self.adam;
        if !a.lr.is_finite() || a.lr <= 0.0 || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.decay < 0.0 {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// Per-epoch training summary. Accuracies are percentages over the
/// train-mode predictions made during the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub steps: u64,
}

struct SampleResult<S> {
    loss: S,
    grads: ModelParams<S>,
    rank: usize,
}

fn run_sample<S: Scalar>(model: &ServeNet<S>, ex: &TokenizedService, seed: u64) -> Result<SampleResult<S>> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let (loss, grads, probs) = model.backward_with_probs(&ex.tokens, ex.label, &mut rng as &mut dyn RngCore)?;
    Ok(SampleResult {
        loss,
        grads,
        rank: target_rank(probs.data(), ex.label),
    })
}

/// Mini-batch training with Adam. The dataset is reshuffled every epoch
/// from `cfg.seed`; the last partial batch is kept. Batch gradients are
/// the mean over samples, reduced in sample order, so results do not
/// depend on `cfg.threads`. A non-finite loss or gradient aborts with
/// [`Error::Divergence`]. `on_epoch` sees each record as it is produced.
pub fn train<S: Scalar>(
    model: &mut ServeNet<S>,
    data: &[TokenizedService],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let classes = model.config.num_classes;
    if let Some(bad) = data.iter().find(|ex| ex.label >= classes) {
        return Err(Error::Data(format!("label {} out of range for {classes} classes", bad.label)));
    }
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(cfg.adam.clone(), &model.params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let top5 = 5.min(classes);

    for epoch in 1..=cfg.epochs {
        adam.epoch = epoch as u64;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hit1, mut hit5) = (0.0, 0usize, 0usize);

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let mut acc = ModelParams::zeros(&model.config);
            let mut batch_loss = 0.0;
            let chunk = cfg.threads.max(1);
            for (idx, sd) in batch.chunks(chunk).zip(seeds.chunks(chunk)) {
                let results: Vec<Result<SampleResult<S>>> = match &pool {
                    Some(pool) => pool.install(|| {
                        idx.par_iter()
                            .zip(sd.par_iter())
                            .map(|(&i, &s)| run_sample(model, &data[i], s))
                            .collect()
                    }),
                    None => idx.iter().zip(sd).map(|(&i, &s)| run_sample(model, &data[i], s)).collect(),
                };
                for r in results {
                    let r = r?;
                    batch_loss += r.loss.as_f64();
                    hit1 += usize::from(r.rank < 1);
                    hit5 += usize::from(r.rank < top5);
                    for (a, g) in acc.tensors_mut().into_iter().zip(r.grads.tensors()) {
                        a.axpy(S::one(), g)?;
                    }
                }
            }
            if !batch_loss.is_finite() || !acc.tensors().iter().all(|t| t.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss / batch.len() as f64,
                });
            }
            let inv = S::of(1.0 / batch.len() as f64);
            acc.tensors_mut().into_iter().for_each(|t| t.scale(inv));
            adam.apply(&mut model.params, &acc)?;
            loss_sum += batch_loss;
        }

        let n = data.len() as f64;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / n,
            top1: 100.0 * hit1 as f64 / n,
            top5: 100.0 * hit5 as f64 / n,
            lr: adam.current_lr(),
        };
        on_epoch(&record);
        history.records.push(record);
    }
    history.steps = adam.step;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_unit_fans() {
        let mut rng = SeededRng::seed_from_u64(1);
        let t: Tensor<f64> = xavier_normal_init(&Shape::new(vec![200_000]).unwrap(), 1, 1, &mut rng).unwrap();
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn xavier_monte_carlo_variance() {
        let mut rng = SeededRng::seed_from_u64(2);
        let t: Tensor<f64> = xavier_normal_init(&Shape::new(vec![1_000, 1_000]).unwrap(), 200, 200, &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.005).abs() / 0.005 < 0.05, "{var}");
    }

    #[test]
    fn xavier_is_seeded_and_checks_fans() {
        let shape = Shape::new(vec![3, 4]).unwrap();
        let a: Tensor<f64> = xavier_normal_init(&shape, 4, 3, &mut SeededRng::seed_from_u64(3)).unwrap();
        let b: Tensor<f64> = xavier_normal_init(&shape, 4, 3, &mut SeededRng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(xavier_normal_init::<f64, _>(&shape, 0, 3, &mut SeededRng::seed_from_u64(3)).is_err());
    }

    fn scalar_params(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::vector(vec![v])]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::vector(vec![0.3, -1.2]), Tensor::filled(&[2, 2], 0.7)];
        let before = p.clone();
        let g: Vec<Tensor<f64>> = p.iter().map(Tensor::zeros_like).collect();
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.apply(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let cfg = AdamConfig {
            decay: 0.0,
            ..AdamConfig::default()
        };
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(cfg, &p);
        s.apply(&mut p, &scalar_params(1.0)).unwrap();
        // m̂ = v̂ = 1 → θ = -lr / (1 + ε)
        let expected = -0.002 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_bounded_by_lr() {
        let mut p = vec![Tensor::vector(vec![0.0; 5])];
        let g = vec![Tensor::vector(vec![1.0, -1.0, 1e-3, 50.0, -7.0])];
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.apply(&mut p, &g).unwrap();
        let lr = s.lr_at(1);
        assert!(p[0].data().iter().all(|d: &f64| d.abs() <= lr * (1.0 + 1e-6)));
    }

    #[test]
    fn lr_decays_per_step() {
        let p = scalar_params(0.0);
        let s = AdamState::new(AdamConfig::default(), &p);
        let lrs: Vec<f64> = (1..50).map(|t| s.lr_at(t)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
        assert!((s.lr_at(1) - 0.002 / 1.0001).abs() < 1e-15);
    }

    #[test]
    fn per_epoch_decay_ignores_step() {
        let cfg = AdamConfig {
            schedule: DecaySchedule::PerEpoch,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(cfg, &scalar_params(0.0));
        s.epoch = 3;
        assert_eq!(s.lr_at(1), s.lr_at(1000));
        assert!((s.lr_at(1) - 0.002 / 1.0003).abs() < 1e-15);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let run = || {
            let mut p = vec![Tensor::vector(vec![1.0, 2.0])];
            let mut s = AdamState::new(AdamConfig::default(), &p);
            for k in 0..10 {
                let g = vec![Tensor::vector(vec![(k as f64).sin(), (k as f64).cos()])];
                s.apply(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        assert!(matches!(
            s.apply(&mut p, &vec![Tensor::vector(vec![1.0, 2.0])]),
            Err(Error::Dimension { .. })
        ));
    }
    fn toy_task(seed: u64) -> (ServeNet<f64>, Vec<TokenizedService>) {
        use crate::data::EmbeddingTable;
        use crate::model::ModelConfig;
        let cfg = ModelConfig::toy();
        let mut rng = SeededRng::seed_from_u64(seed);
        let entries = (0..8)
            .map(|i| (format!("w{i}"), (0..cfg.embed_dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let table = EmbeddingTable::from_entries(cfg.embed_dim, entries).unwrap();
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let data = (0..6)
            .map(|i| TokenizedService {
                tokens: (0..cfg.max_len).map(|j| 2 + (i + j) % 8).collect(),
                label: i % cfg.num_classes,
            })
            .collect();
        (ServeNet::new(cfg, params, table).unwrap(), data)
    }

    #[test]
    fn single_batch_epoch_is_one_step() {
        let (mut model, data) = toy_task(1);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let h = train(&mut model, &data, &cfg, |_| {}).unwrap();
        assert_eq!(h.steps, 1);
        assert_eq!(h.records.len(), 1);
    }

    #[test]
    fn training_is_deterministic_across_threads() {
        let run = |threads| {
            let (mut model, data) = toy_task(2);
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 4,
                threads,
                ..TrainConfig::default()
            };
            let h = train(&mut model, &data, &cfg, |_| {}).unwrap();
            (model.params, h)
        };
        let (p1, h1) = run(1);
        assert_eq!(h1.steps, 6);
        assert!(h1.records.windows(2).all(|w| w[1].lr < w[0].lr));
        assert_eq!(run(1), (p1.clone(), h1.clone()));
        assert_eq!(run(3), (p1, h1));
    }

    #[test]
    fn train_rejects_bad_input() {
        let (mut model, data) = toy_task(3);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut model, &[], &cfg, |_| {}), Err(Error::Data(_))));
        let bad = vec![TokenizedService {
            tokens: data[0].tokens.clone(),
            label: 9,
        }];
        assert!(matches!(train(&mut model, &bad, &cfg, |_| {}), Err(Error::Data(_))));
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut model, &data, &zero, |_| {}), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let (mut model, data) = toy_task(4);
        model.params.fc2.w.data_mut()[0] = f64::NAN;
        let err = train(&mut model, &data, &TrainConfig::default(), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: 1, .. }), "{err}");
    }
}
