use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A service description and its primary category.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServiceRecord {
    #[serde(rename = "Description", alias = "description")]
    pub description: String,
    #[serde(rename = "PrimaryCategory", alias = "primary_category")]
    pub primary_category: String,
}

impl ServiceRecord {
    pub fn new(description: impl Into<String>, primary_category: impl Into<String>) -> Self {
        ServiceRecord {
            description: description.into(),
            primary_category: primary_category.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<ServiceRecord>,
    /// Objects lacking a string `Description` or `PrimaryCategory`.
    pub skipped: usize,
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| obj.get(*n)).and_then(Value::as_str)
}

fn from_value(v: &Value, line: usize) -> Result<Option<ServiceRecord>> {
    let obj = v.as_object().ok_or_else(|| Error::Parse {
        line,
        msg: "expected a JSON object".into(),
    })?;
    let desc = field(obj, &["Description", "description"]);
    let cat = field(obj, &["PrimaryCategory", "primary_category"]);
    Ok(match (desc, cat) {
        (Some(d), Some(c)) => Some(ServiceRecord::new(d, c)),
        _ => None,
    })
}

/// Parse a dataset given either as JSON Lines or as a single JSON array of
/// objects. Objects missing either field are counted and skipped.
pub fn parse_records(text: &str) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut push = |rec: Option<ServiceRecord>| match rec {
        Some(r) => out.records.push(r),
        None => out.skipped += 1,
    };

    if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        for v in &values {
            push(from_value(v, 1)?);
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            push(from_value(&v, i + 1)?);
        }
    }
    if out.skipped > 0 {
        warn!("skipped {} records without Description/PrimaryCategory", out.skipped);
    }
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Ingested> {
    parse_records(&fs::read_to_string(path)?)
}

/// Read a processed dataset, failing if any record is incomplete.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ServiceRecord>> {
    let ingested = ingest(path)?;
    if ingested.skipped > 0 {
        return Err(Error::Data(format!("{} incomplete records", ingested.skipped)));
    }
    Ok(ingested.records)
}

/// Write records as JSON Lines.
pub fn write_records(path: impl AsRef<Path>, records: &[ServiceRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Drop records whose description or category is blank.
pub fn clean(records: Vec<ServiceRecord>) -> Vec<ServiceRecord> {
    records
        .into_iter()
        .filter(|r| !r.description.trim().is_empty() && !r.primary_category.trim().is_empty())
        .collect()
}

/// Categories with their record counts, largest first, ties alphabetical.
pub fn category_histogram(records: &[ServiceRecord]) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.primary_category.as_str()).or_default() += 1;
    }
    let mut hist: Vec<(String, usize)> = counts.into_iter().map(|(c, n)| (c.to_string(), n)).collect();
    hist.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hist
}

/// Keep only records in the `k` largest categories. Dropped records are
/// discarded, not folded into a catch-all class.
pub fn keep_top_categories(records: Vec<ServiceRecord>, k: usize) -> Result<Vec<ServiceRecord>> {
    if k == 0 {
        return Err(Error::Parameter("top-k category count must be >= 1".into()));
    }
    let hist = category_histogram(&records);
    if k > hist.len() {
        warn!("requested top {k} categories but only {} exist; keeping all", hist.len());
    }
    let keep: std::collections::HashSet<String> = hist.into_iter().take(k).map(|(c, _)| c).collect();
    Ok(records.into_iter().filter(|r| keep.contains(&r.primary_category)).collect())
}
