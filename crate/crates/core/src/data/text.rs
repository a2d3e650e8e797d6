use crate::data::glove::{EmbeddingTable, OOV_ID, PAD_ID};
use crate::scalar::Scalar;

/// A description mapped to token ids, paired with its class index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedService {
    pub tokens: Vec<usize>,
    pub label: usize,
}

/// Lowercase, replace everything other than letters, digits and
/// apostrophes with spaces, and split on whitespace.
pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

/// Description length in tokens, using the same tokenization as the model.
pub fn word_count(text: &str) -> usize {
    words(text).len()
}

/// Token ids for `text`, truncated to `max_len` and right-padded with
/// `PAD_ID`. Unknown words map to `OOV_ID`.
pub fn tokenize<S: Scalar>(text: &str, table: &EmbeddingTable<S>, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = words(text)
        .iter()
        .take(max_len)
        .map(|w| table.id(w).unwrap_or(OOV_ID))
        .collect();
    ids.resize(max_len, PAD_ID);
    ids
}

/// (total words, words missing from the table).
pub fn count_oov<S: Scalar>(text: &str, table: &EmbeddingTable<S>) -> (usize, usize) {
    let w = words(text);
    let oov = w.iter().filter(|w| table.id(w).is_none()).count();
    (w.len(), oov)
}
