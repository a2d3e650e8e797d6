//! Top-N accuracy, per-category breakdowns and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const ROW_SUM_TOL: f64 = 1e-9;

/// Predicted probabilities for N rows over C classes, with targets.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch<S> {
    probs: Tensor<S>,
    targets: Vec<usize>,
    categories: Vec<String>,
}

impl<S: Scalar> PredictionBatch<S> {
    pub fn new(probs: Tensor<S>, targets: Vec<usize>, categories: Vec<String>) -> Result<Self> {
        if probs.rank() != 2 {
            return Err(Error::dims("prediction batch", probs.shape(), "(N, C)"));
        }
        let (n, c) = (probs.dims()[0], probs.dims()[1]);
        if targets.len() != n {
            return Err(Error::dims("prediction targets", targets.len(), n));
        }
        if categories.len() != c {
            return Err(Error::dims("category names", categories.len(), c));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Index {
                what: "class",
                index: t,
                len: c,
            });
        }
        for i in 0..n {
            let sum: f64 = probs.row(i).iter().map(|p| p.as_f64()).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Data(format!("probability row {i} sums to {sum}")));
            }
        }
        Ok(PredictionBatch {
            probs,
            targets,
            categories,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn probs(&self) -> &Tensor<S> {
        &self.probs
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// 0-based rank of each row's target.
    pub fn ranks(&self) -> Vec<usize> {
        (0..self.len()).map(|i| target_rank(self.probs.row(i), self.targets[i])).collect()
    }
}

/// Position of `target` when classes are sorted by descending probability,
/// equal probabilities ordered by class index.
pub fn target_rank<S: Scalar>(row: &[S], target: usize) -> usize {
    let pt = row[target];
    row.iter()
        .enumerate()
        .filter(|&(j, &p)| p > pt || (p == pt && j < target))
        .count()
}

fn check_n(n: usize, classes: usize) -> Result<()> {
    if n == 0 || n > classes {
        return Err(Error::Parameter(format!("top-n requires 1 <= n <= {classes}, got {n}")));
    }
    Ok(())
}

/// Percentage of rows whose target is among the `n` most probable classes.
pub fn topn_accuracy<S: Scalar>(batch: &PredictionBatch<S>, n: usize) -> Result<f64> {
    check_n(n, batch.num_classes())?;
    if batch.is_empty() {
        return Err(Error::Data("empty prediction batch".into()));
    }
    let hits = batch.ranks().into_iter().filter(|&r| r < n).count();
    Ok(100.0 * hits as f64 / batch.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub name: String,
    /// Number of evaluated rows; `None` when only the accuracy is known.
    pub support: Option<usize>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// The N used for the per-category column.
    pub topn: usize,
    pub top1: f64,
    pub top5: f64,
    /// Categories with at least one row, in class order.
    pub per_category: Vec<CategoryAccuracy>,
    pub sigma: f64,
}

impl EvalReport {
    /// Report built from already-known per-category accuracies.
    pub fn from_categories(n: usize, topn: usize, top1: f64, top5: f64, per_category: Vec<CategoryAccuracy>) -> Self {
        let accs: Vec<f64> = per_category.iter().map(|c| c.accuracy).collect();
        EvalReport {
            n,
            topn,
            top1,
            top5,
            sigma: sigma(&accs),
            per_category,
        }
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sigma(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Overall top-1/top-5 plus per-category top-`n` accuracy and their σ.
pub fn per_category_report<S: Scalar>(batch: &PredictionBatch<S>, n: usize) -> Result<EvalReport> {
    let classes = batch.num_classes();
    check_n(n, classes)?;
    if batch.is_empty() {
        return Err(Error::Data("empty prediction batch".into()));
    }
    let ranks = batch.ranks();
    let pct = |hits: usize, total: usize| 100.0 * hits as f64 / total as f64;
    let mut support = vec![0usize; classes];
    let mut hits = vec![0usize; classes];
    for (&t, &r) in batch.targets().iter().zip(&ranks) {
        support[t] += 1;
        hits[t] += usize::from(r < n);
    }
    let per_category = (0..classes)
        .filter(|&c| support[c] > 0)
        .map(|c| CategoryAccuracy {
            name: batch.categories()[c].clone(),
            support: Some(support[c]),
            accuracy: pct(hits[c], support[c]),
        })
        .collect();
    let total = ranks.len();
    Ok(EvalReport::from_categories(
        total,
        n,
        pct(ranks.iter().filter(|&&r| r < 1).count(), total),
        pct(ranks.iter().filter(|&&r| r < 5.min(classes)).count(), total),
        per_category,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    RadarCsv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Json => "json",
            ReportFormat::RadarCsv => "csv",
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(report)?;
            out.push('\n');
        }
        ReportFormat::RadarCsv => {
            out.push_str("category,accuracy\n");
            for c in &report.per_category {
                let _ = writeln!(out, "{},{:.2}", csv_field(&c.name), c.accuracy);
            }
        }
        ReportFormat::Text => {
            let width = report
                .per_category
                .iter()
                .map(|c| c.name.chars().count())
                .chain(["category".len()])
                .max()
                .unwrap_or(0);
            let col = format!("top-{}", report.topn);
            let _ = writeln!(out, "samples: {}", report.n);
            let _ = writeln!(out, "top-1:   {:.2}%", report.top1);
            let _ = writeln!(out, "top-5:   {:.2}%", report.top5);
            out.push('\n');
            let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}", "category", "support", col);
            for c in &report.per_category {
                let support = c.support.map_or_else(|| "-".to_string(), |s| s.to_string());
                let _ = writeln!(out, "{:<width$}  {:>7}  {:>7.2}", c.name, support, c.accuracy);
            }
            let _ = writeln!(out, "{:<width$}  {:>7}  {:>7.2}", "sigma", "", report.sigma);
        }
    }
    Ok(out)
}

/// Write `report` to `path` in the chosen format.
pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_report(report, format)?)?;
    Ok(())
}
