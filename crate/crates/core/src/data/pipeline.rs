use serde::{Deserialize, Serialize};

use crate::data::glove::EmbeddingTable;
use crate::data::length::{confidence_interval, filter_by_length, length_stats, LengthStats};
use crate::data::records::{category_histogram, clean, keep_top_categories, Ingested, ServiceRecord};
use crate::data::text::count_oov;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub top_k_categories: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub confidence_level: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            top_k_categories: 50,
            min_len: 24,
            max_len: 110,
            confidence_level: 0.90,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub ingested: usize,
    pub skipped: usize,
    pub cleaned: usize,
    pub cleaned_categories: usize,
    pub top_categories: usize,
    pub length_filtered: usize,
}

/// Sidecar describing a preprocessing run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub counts: StageCounts,
    /// Category histogram of the cleaned dataset.
    pub histogram: Vec<(String, usize)>,
    /// Length statistics of the top-category dataset, before length filtering.
    pub length: LengthStats,
    pub confidence_level: f64,
    pub interval: (f64, f64),
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of words in the final dataset missing from the embeddings.
    pub oov_rate: Option<f64>,
}

/// clean → keep top categories → length filter, recording every stage.
pub fn preprocess<S: Scalar>(
    ingested: Ingested,
    embeddings: Option<&EmbeddingTable<S>>,
    cfg: &PreprocessConfig,
) -> Result<(Vec<ServiceRecord>, PreprocessStats)> {
    let ingested_count = ingested.records.len() + ingested.skipped;
    let cleaned = clean(ingested.records);
    let histogram = category_histogram(&cleaned);
    let cleaned_count = cleaned.len();
    let top = keep_top_categories(cleaned, cfg.top_k_categories)?;
    let top_count = top.len();
    let length = length_stats(&top)?;
    let interval = confidence_interval(&length, cfg.confidence_level)?;
    let kept = filter_by_length(top, cfg.min_len, cfg.max_len)?;

    let oov_rate = embeddings.map(|table| {
        let (words, oov) = kept
            .iter()
            .map(|r| count_oov(&r.description, table))
            .fold((0, 0), |(w, o), (dw, dor)| (w + dw, o + dor));
        if words == 0 {
            0.0
        } else {
            oov as f64 / words as f64
        }
    });

    let stats = PreprocessStats {
        counts: StageCounts {
            ingested: ingested_count,
            skipped: ingested.skipped,
            cleaned: cleaned_count,
            cleaned_categories: histogram.len(),
            top_categories: top_count,
            length_filtered: kept.len(),
        },
        histogram,
        length,
        confidence_level: cfg.confidence_level,
        interval,
        min_len: cfg.min_len,
        max_len: cfg.max_len,
        oov_rate,
    };
    Ok((kept, stats))
}
