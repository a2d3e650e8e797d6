use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::records::ServiceRecord;
use crate::data::text::word_count;
use crate::error::{Error, Result};

/// Mean and standard deviation of description lengths, in tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single record.
    pub stddev: f64,
    pub count: usize,
}

pub fn length_stats(records: &[ServiceRecord]) -> Result<LengthStats> {
    if records.is_empty() {
        return Err(Error::Data("length statistics of an empty dataset".into()));
    }
    let lens: Vec<f64> = records.iter().map(|r| word_count(&r.description) as f64).collect();
    let n = lens.len() as f64;
    let mean = lens.iter().sum::<f64>() / n;
    let stddev = if lens.len() < 2 {
        0.0
    } else {
        (lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(LengthStats {
        mean,
        stddev,
        count: lens.len(),
    })
}

/// Two-sided standard-normal critical value for confidence `level`
/// (1.6448536... at 0.90).
pub fn z_score(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("confidence level {level} outside (0, 1)")));
    }
    let std_normal = Normal::standard();
    Ok(std_normal.inverse_cdf(0.5 + level / 2.0))
}

/// `mean ± z·stddev` at the given two-sided confidence level.
pub fn confidence_interval(stats: &LengthStats, level: f64) -> Result<(f64, f64)> {
    let z = z_score(level)?;
    Ok((stats.mean - z * stats.stddev, stats.mean + z * stats.stddev))
}

/// Keep records whose token count lies in `[lo, hi]`, both ends inclusive.
pub fn filter_by_length(records: Vec<ServiceRecord>, lo: usize, hi: usize) -> Result<Vec<ServiceRecord>> {
    if lo > hi {
        return Err(Error::Parameter(format!("length bounds reversed: {lo} > {hi}")));
    }
    Ok(records
        .into_iter()
        .filter(|r| (lo..=hi).contains(&word_count(&r.description)))
        .collect())
}
