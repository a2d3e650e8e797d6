//! Run configuration: preset defaults, then a `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use servenet::data::PreprocessConfig;
use servenet::model::ModelConfig;
use servenet::optim::{DecaySchedule, TrainConfig};
use servenet::{Error, Result};

/// Settings shared by every subcommand after all sources are merged.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub test_fraction: f64,
}

/// Values given on the command line; `None` means "not given".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub mlen: Option<usize>,
    pub top_k_categories: Option<usize>,
    pub test_fraction: Option<f64>,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2024;

/// Parse `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, found {line:?}"),
            });
        };
        let key = k.trim().replace('-', "_");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key {key:?}"),
            });
        }
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value {raw:?} for {key}")))
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let model = ModelConfig::preset(name)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?} (expected toy or paper)")))?;
        let mut train = TrainConfig::default();
        let mut preprocess = PreprocessConfig {
            max_len: model.max_len,
            ..PreprocessConfig::default()
        };
        if name == "toy" {
            train.epochs = 20;
            train.batch_size = 8;
            preprocess.min_len = 1;
        }
        Ok(RunConfig {
            preset: name.to_string(),
            model,
            train,
            preprocess,
            test_fraction: DEFAULT_TEST_FRACTION,
        })
    }

    /// Merge preset, optional config file and command-line overrides, then
    /// validate everything.
    pub fn resolve(file: Option<&Path>, cli: &Overrides) -> Result<Self> {
        let mut entries = match file {
            Some(p) => parse_config_text(&fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        let preset = cli
            .preset
            .clone()
            .or_else(|| entries.remove("preset"))
            .unwrap_or_else(|| "paper".to_string());
        entries.remove("preset");
        let mut cfg = Self::from_preset(&preset)?;
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.apply(cli);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let p = &mut self.preprocess;
        match key {
            "seed" => t.seed = value(key, raw)?,
            "threads" => t.threads = value(key, raw)?,
            "epochs" => t.epochs = value(key, raw)?,
            "batch_size" => t.batch_size = value(key, raw)?,
            "lr" => t.adam.lr = value(key, raw)?,
            "decay" => t.adam.decay = value(key, raw)?,
            "beta1" => t.adam.beta1 = value(key, raw)?,
            "beta2" => t.adam.beta2 = value(key, raw)?,
            "epsilon" => t.adam.epsilon = value(key, raw)?,
            "decay_schedule" => {
                t.adam.schedule = match raw {
                    "per-step" | "per_step" => DecaySchedule::PerStep,
                    "per-epoch" | "per_epoch" => DecaySchedule::PerEpoch,
                    _ => return Err(Error::Config(format!("invalid decay_schedule {raw:?}"))),
                }
            }
            "mlen" => {
                m.max_len = value(key, raw)?;
                p.max_len = m.max_len;
            }
            "embed_dim" => m.embed_dim = value(key, raw)?,
            "conv1_filters" => m.conv1_filters = value(key, raw)?,
            "lstm_hidden" => m.lstm_hidden = value(key, raw)?,
            "dense_hidden" => m.dense_hidden = value(key, raw)?,
            "dropout_rate" => m.dropout_rate = value(key, raw)?,
            "top_k_categories" => p.top_k_categories = value(key, raw)?,
            "min_len" => p.min_len = value(key, raw)?,
            "confidence_level" => p.confidence_level = value(key, raw)?,
            "test_fraction" => self.test_fraction = value(key, raw)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    fn apply(&mut self, cli: &Overrides) {
        if let Some(v) = cli.seed {
            self.train.seed = v;
        }
        if let Some(v) = cli.threads {
            self.train.threads = v;
        }
        if let Some(v) = cli.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = cli.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = cli.lr {
            self.train.adam.lr = v;
        }
        if let Some(v) = cli.mlen {
            self.model.max_len = v;
            self.preprocess.max_len = v;
        }
        if let Some(v) = cli.top_k_categories {
            self.preprocess.top_k_categories = v;
        }
        if let Some(v) = cli.test_fraction {
            self.test_fraction = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let p = &self.preprocess;
        if p.top_k_categories == 0 {
            return Err(Error::Config("top_k_categories must be >= 1".into()));
        }
        if p.min_len > p.max_len {
            return Err(Error::Config(format!("min_len {} exceeds max_len {}", p.min_len, p.max_len)));
        }
        if !(p.confidence_level > 0.0 && p.confidence_level < 1.0) {
            return Err(Error::Config(format!("confidence_level {} outside (0, 1)", p.confidence_level)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        Ok(())
    }
}

/// `explicit`, else `$SERVENET_DATA_DIR/<default_name>`.
pub fn data_path(explicit: Option<PathBuf>, data_dir: Option<&Path>, default_name: &str, what: &str) -> Result<PathBuf> {
    explicit
        .or_else(|| data_dir.map(|d| d.join(default_name)))
        .ok_or_else(|| Error::Config(format!("no {what} path given and SERVENET_DATA_DIR is not set")))
}
