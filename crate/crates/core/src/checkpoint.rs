//! Binary checkpoint files.
//!
//! ```text
//! "SRVN"                     4-byte magic
//! version                    u32 LE
//! header length              u32 LE
//! header                     UTF-8 JSON (config, seed, epoch, categories, vocabulary)
//! repeated until EOF:
//!   name length              u32 LE
//!   name                     UTF-8
//!   rank                     u32 LE
//!   dims                     rank × u64 LE
//!   data                     numel × f64 LE, row-major
//! ```
//!
//! Every model parameter is stored under its [`ModelParams::named_tensors`]
//! name, plus the embedding matrix under `"embedding"`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, ServeNet};
use crate::optim::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SRVN";
pub const FORMAT_VERSION: u32 = 1;
const EMBEDDING: &str = "embedding";

/// A trained network with everything needed to run it again.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub config: ModelConfig,
    pub params: ModelParams<S>,
    pub seed: u64,
    pub epoch: usize,
    /// Class names in label order.
    pub categories: Vec<String>,
    pub embedding: EmbeddingTable<S>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    categories: Vec<String>,
    vocabulary: Vec<String>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn from_model(model: &ServeNet<S>, categories: Vec<String>, seed: u64, epoch: usize) -> Self {
        Checkpoint {
            config: model.config.clone(),
            params: model.params.clone(),
            seed,
            epoch,
            categories,
            embedding: model.embedding.clone(),
        }
    }

    pub fn into_model(self) -> Result<ServeNet<S>> {
        if self.categories.len() != self.config.num_classes {
            return Err(Error::Config(format!(
                "checkpoint lists {} categories for {} classes",
                self.categories.len(),
                self.config.num_classes
            )));
        }
        ServeNet::new(self.config, self.params, self.embedding)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            categories: self.categories.clone(),
            vocabulary: self.embedding.words().to_vec(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&len_u32(header.len())?.to_le_bytes());
        out.extend_from_slice(&header);
        let named = self.params.named_tensors();
        let tensors = named
            .iter()
            .map(|(n, t)| (n.as_str(), *t))
            .chain([(EMBEDDING, self.embedding.matrix())]);
        for (name, t) in tensors {
            out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len_u32(t.rank())?.to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| Error::Corrupt(format!("header: {e}")))?;

        let mut tensors: HashMap<String, Tensor<S>> = HashMap::new();
        while r.pos < bytes.len() {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::Corrupt(format!("tensor {name} has implausible dims {dims:?}")))?;
            let raw = r.take(numel * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect();
            let t = Tensor::from_vec(dims, data).map_err(|e| Error::Corrupt(format!("tensor {name}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Corrupt(format!("tensor {name} stored twice")));
            }
        }

        let mut params = ModelParams::zeros(&header.config);
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::Corrupt(format!("missing tensor {name}")))?;
            if t.dims() != slot.dims() {
                return Err(Error::Corrupt(format!(
                    "tensor {name} has shape {:?}, config expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        let matrix = tensors
            .remove(EMBEDDING)
            .ok_or_else(|| Error::Corrupt("missing embedding tensor".into()))?;
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Corrupt(format!("unexpected tensor {extra}")));
        }
        let embedding = EmbeddingTable::from_parts(header.vocabulary, matrix)
            .map_err(|e| Error::Corrupt(format!("embedding: {e}")))?;
        Ok(Checkpoint {
            config: header.config,
            params,
            seed: header.seed,
            epoch: header.epoch,
            categories: header.categories,
            embedding,
        })
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("length {n} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint<S: Scalar>(path: impl AsRef<Path>, cp: &Checkpoint<S>) -> Result<()> {
    fs::write(path, cp.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
