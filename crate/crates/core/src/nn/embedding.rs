use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stack the embedding rows of `tokens` into an (mLen, n) matrix. The
/// reserved PAD and OOV ids map to zero rows.
pub fn embed_lookup<S: Scalar>(tokens: &[usize], table: &EmbeddingTable<S>) -> Result<Tensor<S>> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = table.dim();
    let rows = table.rows();
    let mut out = Vec::with_capacity(tokens.len() * n);
    for &id in tokens {
        if id >= rows {
            return Err(Error::Index {
                what: "token id",
                index: id,
                len: rows,
            });
        }
        out.extend_from_slice(table.matrix().row(id));
    }
    Tensor::from_vec(vec![tokens.len(), n], out)
}
