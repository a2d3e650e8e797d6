use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reserved id for right-padding. Embeds to the zero vector.
pub const PAD_ID: usize = 0;
/// Reserved id for words missing from the vocabulary. Embeds to zero.
pub const OOV_ID: usize = 1;
const FIRST_WORD_ID: usize = 2;

/// Fixed word-vector lookup. Rows 0 and 1 are the zero PAD/OOV rows; real
/// words start at row 2.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<S> {
    index: HashMap<String, usize>,
    words: Vec<String>,
    matrix: Tensor<S>,
}

impl<S: Scalar> EmbeddingTable<S> {
    /// Build from (word, vector) pairs. A repeated word keeps its last vector.
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("embedding dimension must be >= 1".into()));
        }
        let mut index = HashMap::new();
        let mut words = Vec::new();
        let mut data = vec![S::zero(); FIRST_WORD_ID * dim];
        let mut dupes = 0usize;
        for (word, vec) in entries {
            if vec.len() != dim {
                return Err(Error::dims("embedding entry", vec.len(), dim));
            }
            let row: Vec<S> = vec.iter().map(|&v| S::of(v)).collect();
            if let Some(&id) = index.get(&word) {
                dupes += 1;
                data[id * dim..(id + 1) * dim].copy_from_slice(&row);
            } else {
                index.insert(word.clone(), FIRST_WORD_ID + words.len());
                words.push(word);
                data.extend(row);
            }
        }
        if dupes > 0 {
            warn!("{dupes} duplicate embedding words; the last vector was kept");
        }
        let rows = FIRST_WORD_ID + words.len();
        Ok(EmbeddingTable {
            index,
            words,
            matrix: Tensor::from_vec(vec![rows, dim], data)?,
        })
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Number of real words, excluding the reserved rows.
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Matrix rows including the reserved rows.
    pub fn rows(&self) -> usize {
        self.matrix.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.dims()[1]
    }

    pub fn matrix(&self) -> &Tensor<S> {
        &self.matrix
    }

    /// Vocabulary in id order, starting at id 2.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Rebuild from a word list (id order from 2) and a full matrix
    /// including the two reserved rows.
    pub fn from_parts(words: Vec<String>, matrix: Tensor<S>) -> Result<Self> {
        if matrix.rank() != 2 || matrix.dims()[0] != words.len() + FIRST_WORD_ID {
            return Err(Error::dims("embedding table", matrix.shape(), words.len() + FIRST_WORD_ID));
        }
        if matrix.row(PAD_ID).iter().chain(matrix.row(OOV_ID)).any(|v| *v != S::zero()) {
            return Err(Error::Data("reserved embedding rows must be zero".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), FIRST_WORD_ID + i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(EmbeddingTable { index, words, matrix })
    }

    /// A smaller table holding only the given words that this table knows,
    /// in this table's id order.
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Self {
        let wanted: std::collections::HashSet<&str> = keep.into_iter().collect();
        let dim = self.dim();
        let mut words = Vec::new();
        let mut data = vec![S::zero(); FIRST_WORD_ID * dim];
        for (i, w) in self.words.iter().enumerate() {
            if wanted.contains(w.as_str()) {
                words.push(w.clone());
                data.extend_from_slice(self.matrix.row(FIRST_WORD_ID + i));
            }
        }
        let matrix = Tensor::from_vec(vec![words.len() + FIRST_WORD_ID, dim], data).expect("consistent table");
        EmbeddingTable::from_parts(words, matrix).expect("consistent table")
    }
}

/// Parse GloVe text format: one word followed by `expected_dim` floats per line.
pub fn parse_glove<S: Scalar>(reader: impl BufRead, expected_dim: usize) -> Result<EmbeddingTable<S>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("bad float for {word:?}: {e}"),
            })?;
        if values.len() != expected_dim {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {expected_dim} values for {word:?}, found {}", values.len()),
            });
        }
        entries.push((word.to_string(), values));
    }
    EmbeddingTable::from_entries(expected_dim, entries)
}

pub fn load_glove<S: Scalar>(path: impl AsRef<Path>, expected_dim: usize) -> Result<EmbeddingTable<S>> {
    parse_glove(BufReader::new(File::open(path)?), expected_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "api 0.1 0.2 0.3 0.4\nmap -1 0 1 2.5\nsms 1e-3 2 3 4\n";

    #[test]
    fn small_fixture() {
        let t: EmbeddingTable<f64> = parse_glove(FIXTURE.as_bytes(), 4).unwrap();
        assert_eq!(t.vocab_size(), 3);
        assert_eq!(t.matrix().dims(), &[5, 4]);
        assert!(t.matrix().row(PAD_ID).iter().all(|&v| v == 0.0));
        assert!(t.matrix().row(OOV_ID).iter().all(|&v| v == 0.0));
        assert_eq!(t.id("api"), Some(2));
        assert_eq!(t.matrix().row(3), &[-1.0, 0.0, 1.0, 2.5]);
    }

    #[test]
    fn wrong_count_names_line() {
        let bad = "api 0.1 0.2 0.3 0.4\nmap 1 2 3\n";
        match parse_glove::<f64>(bad.as_bytes(), 4) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_glove::<f64>("x 1 y\n".as_bytes(), 2), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_last_wins() {
        let t: EmbeddingTable<f64> = parse_glove("a 1 1\nb 2 2\na 3 3\n".as_bytes(), 2).unwrap();
        assert_eq!(t.vocab_size(), 2);
        assert_eq!(t.matrix().row(t.id("a").unwrap()), &[3.0, 3.0]);
    }

    #[test]
    fn non_reserved_rows_are_finite_and_nonzero() {
        let t: EmbeddingTable<f64> = parse_glove(FIXTURE.as_bytes(), 4).unwrap();
        for id in 2..t.rows() {
            let norm: f64 = t.matrix().row(id).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm.is_finite() && norm > 0.0);
        }
    }

    #[test]
    fn restrict_keeps_known_words_in_order() {
        let t: EmbeddingTable<f64> = parse_glove(FIXTURE.as_bytes(), 4).unwrap();
        let r = t.restrict(["sms", "api", "unknown"]);
        assert_eq!(r.words(), &["api".to_string(), "sms".to_string()]);
        assert_eq!(r.matrix().row(r.id("sms").unwrap()), t.matrix().row(t.id("sms").unwrap()));
    }
}
