//! Multinomial Naive Bayes over bag-of-words, and the split-method
//! comparison built on it.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, split_indices, words, ServiceRecord, SplitScheme, SplitSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NbFeatures {
    /// Every occurrence of a word counts.
    #[default]
    Counts,
    /// Each distinct word counts once per document.
    Binary,
}

/// Fitted model. Likelihood rows are smoothed over the training vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct NbModel {
    pub features: NbFeatures,
    pub log_prior: Vec<f64>,
    vocab: HashMap<String, usize>,
    /// (C, V) row-major log P(w | c).
    log_lik: Vec<f64>,
    /// log P(w | c) for a word never seen in training.
    log_unseen: Vec<f64>,
}

fn doc_words(text: &str, features: NbFeatures) -> Vec<String> {
    let w = words(text);
    match features {
        NbFeatures::Counts => w,
        NbFeatures::Binary => w.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
    }
}

impl NbModel {
    pub fn num_classes(&self) -> usize {
        self.log_prior.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// log P(word | class), using the unseen-word value for unknown words.
    pub fn log_likelihood(&self, class: usize, word: &str) -> f64 {
        match self.vocab.get(word) {
            Some(&j) => self.log_lik[class * self.vocab.len() + j],
            None => self.log_unseen[class],
        }
    }
}

/// Fit on `(text, label)` pairs with additive smoothing `alpha`:
/// P(w | c) = (count(w, c) + α) / (count(c) + α·V).
pub fn nb_fit(docs: &[(&str, usize)], num_classes: usize, alpha: f64, features: NbFeatures) -> Result<NbModel> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Parameter(format!("smoothing alpha must be > 0, got {alpha}")));
    }
    if docs.is_empty() {
        return Err(Error::Data("cannot fit Naive Bayes on an empty training set".into()));
    }
    if let Some(&(_, l)) = docs.iter().find(|(_, l)| *l >= num_classes) {
        return Err(Error::Index {
            what: "class",
            index: l,
            len: num_classes,
        });
    }

    let tokenized: Vec<(Vec<String>, usize)> = docs.iter().map(|&(t, l)| (doc_words(t, features), l)).collect();
    let mut vocab = HashMap::new();
    for (ws, _) in &tokenized {
        for w in ws {
            let next = vocab.len();
            vocab.entry(w.clone()).or_insert(next);
        }
    }
    let v = vocab.len();
    let mut counts = vec![0.0f64; num_classes * v];
    let mut totals = vec![0.0f64; num_classes];
    let mut class_docs = vec![0usize; num_classes];
    for (ws, l) in &tokenized {
        class_docs[*l] += 1;
        for w in ws {
            counts[l * v + vocab[w]] += 1.0;
            totals[*l] += 1.0;
        }
    }

    let n = docs.len() as f64;
    let log_prior = class_docs.iter().map(|&c| (c as f64 / n).ln()).collect();
    let mut log_lik = counts;
    let mut log_unseen = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let denom = (totals[c] + alpha * v as f64).ln();
        for x in &mut log_lik[c * v..(c + 1) * v] {
            *x = (*x + alpha).ln() - denom;
        }
        log_unseen.push(alpha.ln() - denom);
    }
    Ok(NbModel {
        features,
        log_prior,
        vocab,
        log_lik,
        log_unseen,
    })
}

/// Posterior over classes for one description, normalized in log space.
pub fn nb_predict(model: &NbModel, text: &str) -> Vec<f64> {
    let ws = doc_words(text, model.features);
    let scores: Vec<f64> = (0..model.num_classes())
        .map(|c| model.log_prior[c] + ws.iter().map(|w| model.log_likelihood(c, w)).sum::<f64>())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCompareConfig {
    /// Repetitions of the random and stratified schemes; also the number
    /// of folds evaluated (capped at `folds`).
    pub repeats: usize,
    pub folds: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub alpha: f64,
    pub features: NbFeatures,
    /// Accuracy is top-`topn` (clamped to the class count).
    pub topn: usize,
}

impl Default for SplitCompareConfig {
    fn default() -> Self {
        SplitCompareConfig {
            repeats: 10,
            folds: 10,
            test_fraction: 0.2024,
            seed: 42,
            alpha: 1.0,
            features: NbFeatures::Counts,
            topn: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub scheme: String,
    pub train_mean: f64,
    pub test_mean: f64,
    pub train_std: f64,
    pub test_std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub config: SplitCompareConfig,
    pub rows: Vec<SplitRow>,
}

impl SplitComparison {
    pub fn row(&self, scheme: &str) -> Option<&SplitRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|r| r.scheme.len()).max().unwrap_or(0).max(16);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            "Splitting method", "Train_M", "Test_M", "Train_V", "Test_V"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                r.scheme, r.train_mean, r.test_mean, r.train_std, r.test_std
            );
        }
        let _ = writeln!(
            out,
            "\ntop-{} accuracy (%), mean and standard deviation over runs",
            self.config.topn
        );
        out
    }
}

pub const RANDOM: &str = "Random selection";
pub const KFOLD: &str = "10-fold cross-validation";
pub const STRATIFIED: &str = "Random selection by category";

fn accuracy(model: &NbModel, docs: &[(&str, usize)], topn: usize) -> f64 {
    let hits: usize = docs
        .par_iter()
        .map(|&(text, label)| {
            let p = nb_predict(model, text);
            usize::from(crate::metrics::target_rank(&p, label) < topn)
        })
        .sum();
    100.0 * hits as f64 / docs.len() as f64
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train and evaluate Naive Bayes under random selection, k-fold
/// cross-validation and stratified random selection. Standard deviations
/// are population values over the runs of each scheme.
pub fn compare_split_methods(records: &[ServiceRecord], cfg: &SplitCompareConfig) -> Result<SplitComparison> {
    if cfg.repeats == 0 {
        return Err(Error::Parameter("repeats must be >= 1".into()));
    }
    let categories: Vec<&str> = records
        .iter()
        .map(|r| r.primary_category.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let labels: Vec<usize> = records.iter().map(|r| index[r.primary_category.as_str()]).collect();
    let docs: Vec<(&str, usize)> = records.iter().zip(&labels).map(|(r, &l)| (r.description.as_str(), l)).collect();
    let c = categories.len();
    let topn = cfg.topn.clamp(1, c.max(1));

    let evaluate = |train: &[usize], test: &[usize]| -> Result<(f64, f64)> {
        let tr: Vec<(&str, usize)> = train.iter().map(|&i| docs[i]).collect();
        let te: Vec<(&str, usize)> = test.iter().map(|&i| docs[i]).collect();
        if te.is_empty() {
            return Err(Error::Data("split produced an empty test set".into()));
        }
        let model = nb_fit(&tr, c, cfg.alpha, cfg.features)?;
        Ok((accuracy(&model, &tr, topn), accuracy(&model, &te, topn)))
    };

    let mut rows = Vec::new();
    for (name, scheme) in [(RANDOM, SplitScheme::Random), (STRATIFIED, SplitScheme::StratifiedRandom)] {
        let runs = (0..cfg.repeats)
            .map(|r| {
                let spec = SplitSpec {
                    scheme,
                    test_fraction: cfg.test_fraction,
                    seed: cfg.seed.wrapping_add(r as u64),
                };
                let (train, test) = split_indices(&labels, &spec)?;
                evaluate(&train, &test)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(name, &runs));
    }

    let folds = kfold_indices(docs.len(), cfg.folds, cfg.seed)?;
    let runs = (0..cfg.repeats.min(cfg.folds))
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, fold)| fold.iter().copied())
                .collect();
            evaluate(&train, &folds[f])
        })
        .collect::<Result<Vec<_>>>()?;
    rows.insert(1, summarize(KFOLD, &runs));

    Ok(SplitComparison {
        config: cfg.clone(),
        rows,
    })
}

fn summarize(name: &str, runs: &[(f64, f64)]) -> SplitRow {
    let (train_mean, train_std) = mean_std(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let (test_mean, test_std) = mean_std(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    SplitRow {
        scheme: name.to_string(),
        train_mean,
        test_mean,
        train_std,
        test_std,
        runs: runs.len(),
    }
}
