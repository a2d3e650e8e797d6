use std::collections::BTreeMap;
use std::fmt::Display;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::records::ServiceRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    /// One seeded shuffle of the whole dataset, then a fraction cut.
    Random,
    /// Seeded shuffle into `k` near-equal folds; `fold` is the test fold.
    KFold { k: usize, fold: usize },
    /// Shuffle and cut each category separately so every category keeps
    /// the same train/test proportion.
    StratifiedRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub scheme: SplitScheme,
    /// Ignored by `KFold`.
    pub test_fraction: f64,
    pub seed: u64,
}

fn train_count(count: usize, test_fraction: f64) -> usize {
    let raw = ((1.0 - test_fraction) * count as f64).round() as usize;
    raw.clamp(1, count - 1)
}

/// `k` disjoint folds of `0..n` after a seeded shuffle; fold sizes differ
/// by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("cannot split {n} records into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Train and test index lists (each ascending) for a dataset with the
/// given per-record labels.
pub fn split_indices<L: Ord + Display>(labels: &[L], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if !matches!(spec.scheme, SplitScheme::KFold { .. }) && !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Parameter(format!("test fraction {} outside (0, 1)", spec.test_fraction)));
    }
    let (mut train, mut test) = match spec.scheme {
        SplitScheme::Random => {
            if n < 2 {
                return Err(Error::Data(format!("cannot split {n} records")));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
            let cut = train_count(n, spec.test_fraction);
            let test = idx.split_off(cut);
            (idx, test)
        }
        SplitScheme::KFold { k, fold } => {
            if fold >= k {
                return Err(Error::Parameter(format!("fold {fold} out of range for k = {k}")));
            }
            let mut folds = kfold_indices(n, k, spec.seed)?;
            let test = folds.remove(fold);
            (folds.concat(), test)
        }
        SplitScheme::StratifiedRandom => {
            let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                groups.entry(l).or_default().push(i);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (label, mut idx) in groups {
                if idx.len() < 2 {
                    return Err(Error::Data(format!(
                        "category {label} has {} record(s); stratified split needs at least 2",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut rng);
                let cut = train_count(idx.len(), spec.test_fraction);
                test.extend_from_slice(&idx[cut..]);
                train.extend_from_slice(&idx[..cut]);
            }
            (train, test)
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split records by their primary category.
pub fn split(records: &[ServiceRecord], spec: &SplitSpec) -> Result<(Vec<ServiceRecord>, Vec<ServiceRecord>)> {
    let labels: Vec<&str> = records.iter().map(|r| r.primary_category.as_str()).collect();
    let (train, test) = split_indices(&labels, spec)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| records[i].clone()).collect();
    Ok((pick(train), pick(test)))
}
