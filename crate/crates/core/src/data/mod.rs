//! Dataset ingestion and preparation: record cleaning, category pruning,
//! description-length filtering, tokenization, GloVe embeddings and
//! train/test selection.

mod glove;
mod length;
mod pipeline;
mod records;
mod split;
mod text;

pub use glove::{load_glove, parse_glove, EmbeddingTable, OOV_ID, PAD_ID};
pub use length::{confidence_interval, filter_by_length, length_stats, z_score, LengthStats};
pub use pipeline::{preprocess, PreprocessConfig, PreprocessStats, StageCounts};
pub use records::{
    category_histogram, clean, ingest, keep_top_categories, parse_records, read_records, write_records, Ingested,
    ServiceRecord,
};
pub use split::{kfold_indices, split, split_indices, SplitScheme, SplitSpec};
pub use text::{count_oov, normalize, tokenize, word_count, words, TokenizedService};
