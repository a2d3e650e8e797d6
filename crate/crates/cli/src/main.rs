mod config;

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use servenet::baseline::{compare_split_methods, NbFeatures, SplitCompareConfig};
use servenet::checkpoint::{load_checkpoint, save_checkpoint};
use servenet::data::{
    ingest, load_glove, preprocess, read_records, split, tokenize, words, write_records, ServiceRecord, SplitScheme,
    SplitSpec, TokenizedService,
};
use servenet::metrics::{per_category_report, render_report, emit_report, PredictionBatch, ReportFormat};
use servenet::model::Mode;
use servenet::optim::{train, EpochRecord};
use servenet::{Checkpoint, EmbeddingTable, Error, ModelParams, SeededRng, ServeNet, Tensor};

use crate::config::{data_path, Overrides, RunConfig};

const RAW_FILE: &str = "services.jsonl";
const GLOVE_FILE: &str = "glove.6B.200d.txt";
const PROCESSED_FILE: &str = "processed/services.jsonl";

#[derive(Parser, Debug)]
#[command(name = "servenet", version, about = "Web-service description classifier")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads inside a batch [default: 1].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Token sequence length; also the upper length filter bound.
    #[arg(long, global = true)]
    mlen: Option<usize>,
    #[arg(long, global = true)]
    top_k_categories: Option<usize>,
    /// Held-out fraction for splits [default: 0.2024].
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    /// Hyper-parameter preset: toy or paper [default: paper].
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory used for input paths that are not given explicitly.
    #[arg(long, env = "SERVENET_DATA_DIR", global = true, hide_env_values = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean, prune and length-filter a raw dataset.
    Preprocess {
        /// Raw JSON / JSON Lines dataset [default: $SERVENET_DATA_DIR/services.jsonl].
        #[arg(long)]
        input: Option<PathBuf>,
        /// GloVe text file [default: $SERVENET_DATA_DIR/glove.6B.200d.txt].
        #[arg(long)]
        glove: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare random, k-fold and stratified selection with Naive Bayes.
    SplitCompare {
        /// Processed dataset [default: $SERVENET_DATA_DIR/processed/services.jsonl].
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 5)]
        topn: usize,
        /// Binary word features instead of counts.
        #[arg(long)]
        binary: bool,
    },
    /// Train the network and write a checkpoint plus history.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        glove: Option<PathBuf>,
        /// Checkpoint path; sidecar files share its stem.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the five most likely categories for a description.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        text: String,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
struct StageError {
    stage: &'static str,
    source: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.source))
        }
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    let overrides = Overrides {
        preset: cli.preset.clone(),
        seed: cli.seed,
        threads: cli.threads,
        epochs: cli.epochs,
        batch_size: cli.batch_size,
        lr: cli.lr,
        mlen: cli.mlen,
        top_k_categories: cli.top_k_categories,
        test_fraction: cli.test_fraction,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides).stage("config")?;
    let dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Preprocess { input, glove, out_dir } => {
            let input = data_path(input, dir, RAW_FILE, "raw dataset").stage("config")?;
            let glove = data_path(glove, dir, GLOVE_FILE, "GloVe").stage("config")?;
            cmd_preprocess(&cfg, &input, &glove, &out_dir)
        }
        Command::SplitCompare {
            data,
            out_dir,
            repeats,
            topn,
            binary,
        } => {
            let data = data_path(data, dir, PROCESSED_FILE, "processed dataset").stage("config")?;
            let features = if binary { NbFeatures::Binary } else { NbFeatures::Counts };
            cmd_split_compare(&cfg, &data, &out_dir, repeats, topn, features)
        }
        Command::Train { data, glove, out } => {
            let data = data_path(data, dir, PROCESSED_FILE, "processed dataset").stage("config")?;
            let glove = data_path(glove, dir, GLOVE_FILE, "GloVe").stage("config")?;
            cmd_train(&cfg, &data, &glove, &out)
        }
        Command::Eval {
            checkpoint,
            data,
            out_dir,
        } => cmd_eval(&checkpoint, &data, &out_dir),
        Command::Predict { checkpoint, text } => cmd_predict(&checkpoint, &text),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> servenet::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_preprocess(cfg: &RunConfig, input: &Path, glove: &Path, out_dir: &Path) -> Result<(), StageError> {
    let table = load_glove::<f64>(glove, cfg.model.embed_dim).stage("load glove")?;
    let ingested = ingest(input).stage("ingest")?;
    let (records, stats) = preprocess(ingested, Some(&table), &cfg.preprocess).stage("preprocess")?;
    fs::create_dir_all(out_dir).stage("write output")?;
    write_records(out_dir.join("services.jsonl"), &records).stage("write output")?;
    write_json(&out_dir.join("stats.json"), &stats).stage("write output")?;
    let c = &stats.counts;
    println!(
        "ingested {} -> cleaned {} -> top {} categories {} -> length {}..={} {}",
        c.ingested,
        c.cleaned,
        cfg.preprocess.top_k_categories,
        c.top_categories,
        cfg.preprocess.min_len,
        cfg.preprocess.max_len,
        c.length_filtered
    );
    println!(
        "length mean {:.4}, stddev {:.4}, {:.0}% interval ({:.4}, {:.4}), oov rate {:.4}",
        stats.length.mean,
        stats.length.stddev,
        100.0 * stats.confidence_level,
        stats.interval.0,
        stats.interval.1,
        stats.oov_rate.unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_split_compare(
    cfg: &RunConfig,
    data: &Path,
    out_dir: &Path,
    repeats: usize,
    topn: usize,
    features: NbFeatures,
) -> Result<(), StageError> {
    let records = read_records(data).stage("read dataset")?;
    let sc = SplitCompareConfig {
        repeats,
        test_fraction: cfg.test_fraction,
        seed: cfg.train.seed,
        features,
        topn,
        ..SplitCompareConfig::default()
    };
    let table = compare_split_methods(&records, &sc).stage("split compare")?;
    fs::create_dir_all(out_dir).stage("write output")?;
    let text = table.to_text();
    fs::write(out_dir.join("split_compare.txt"), &text).stage("write output")?;
    write_json(&out_dir.join("split_compare.json"), &table).stage("write output")?;
    print!("{text}");
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn category_index(categories: &[String]) -> HashMap<&str, usize> {
    categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

fn tokenize_all(
    records: &[ServiceRecord],
    table: &EmbeddingTable,
    max_len: usize,
    index: &HashMap<&str, usize>,
) -> servenet::Result<Vec<TokenizedService>> {
    records
        .iter()
        .map(|r| {
            let label = *index.get(r.primary_category.as_str()).ok_or_else(|| {
                Error::Config(format!("category {:?} is not one of the model's classes", r.primary_category))
            })?;
            Ok(TokenizedService {
                tokens: tokenize(&r.description, table, max_len),
                label,
            })
        })
        .collect()
}

fn cmd_train(cfg: &RunConfig, data: &Path, glove: &Path, out: &Path) -> Result<(), StageError> {
    let records = read_records(data).stage("read dataset")?;
    let categories: Vec<String> = records
        .iter()
        .map(|r| r.primary_category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut model_cfg = cfg.model.clone();
    model_cfg.num_classes = categories.len();

    let spec = SplitSpec {
        scheme: SplitScheme::StratifiedRandom,
        test_fraction: cfg.test_fraction,
        seed: cfg.train.seed,
    };
    let (train_set, test_set) = split(&records, &spec).stage("split")?;
    info!("{} train / {} test records, {} classes", train_set.len(), test_set.len(), categories.len());

    let full = load_glove::<f64>(glove, model_cfg.embed_dim).stage("load glove")?;
    let vocab: BTreeSet<String> = records.iter().flat_map(|r| words(&r.description)).collect();
    let table = full.restrict(vocab.iter().map(String::as_str));
    drop(full);

    let index = category_index(&categories);
    let samples = tokenize_all(&train_set, &table, model_cfg.max_len, &index).stage("tokenize")?;

    let mut rng = SeededRng::seed_from_u64(cfg.train.seed);
    let params = ModelParams::init(&model_cfg, &mut rng).stage("init")?;
    let mut model = ServeNet::new(model_cfg, params, table).stage("init")?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).stage("write output")?;
    }
    write_records(sidecar(out, "train.jsonl"), &train_set).stage("write output")?;
    write_records(sidecar(out, "test.jsonl"), &test_set).stage("write output")?;
    let mut jsonl = BufWriter::new(File::create(sidecar(out, "history.jsonl")).stage("write output")?);
    let mut txt = BufWriter::new(File::create(sidecar(out, "history.txt")).stage("write output")?);
    writeln!(txt, "{:>5}  {:>10}  {:>7}  {:>7}  {:>10}", "epoch", "loss", "top1", "top5", "lr").stage("write output")?;

    let mut write_err = None;
    let result = train(&mut model, &samples, &cfg.train, |r: &EpochRecord| {
        info!("epoch {:>3}  loss {:.4}  top-1 {:.2}%  top-5 {:.2}%", r.epoch, r.loss, r.top1, r.top5);
        let line = serde_json::to_string(r).expect("epoch record serializes");
        let res = writeln!(jsonl, "{line}")
            .and_then(|_| writeln!(txt, "{:>5}  {:>10.6}  {:>7.2}  {:>7.2}  {:>10.3e}", r.epoch, r.loss, r.top1, r.top5, r.lr))
            .and_then(|_| jsonl.flush())
            .and_then(|_| txt.flush());
        if let Err(e) = res {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e).stage("write output");
    }
    let history = result.stage("train")?;

    let epoch = history.records.last().map_or(0, |r| r.epoch);
    let cp = Checkpoint::from_model(&model, categories, cfg.train.seed, epoch);
    save_checkpoint(out, &cp).stage("write output")?;
    println!("wrote {} after {epoch} epochs ({} optimizer steps)", out.display(), history.steps);
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, out_dir: &Path) -> Result<(), StageError> {
    let cp: Checkpoint = load_checkpoint(checkpoint).stage("load checkpoint")?;
    let categories = cp.categories.clone();
    let model = cp.into_model().stage("load checkpoint")?;
    let records = read_records(data).stage("read dataset")?;
    let index = category_index(&categories);
    let samples = tokenize_all(&records, &model.embedding, model.config.max_len, &index).stage("tokenize")?;
    if samples.is_empty() {
        return Err(Error::Data("evaluation set is empty".into())).stage("read dataset");
    }

    let c = categories.len();
    let mut probs = Vec::with_capacity(samples.len() * c);
    for s in &samples {
        probs.extend(model.forward(&s.tokens, Mode::Infer).stage("predict")?.into_data());
    }
    let batch = PredictionBatch::new(
        Tensor::from_vec(vec![samples.len(), c], probs).stage("predict")?,
        samples.iter().map(|s| s.label).collect(),
        categories,
    )
    .stage("score")?;
    let report = per_category_report(&batch, 5.min(c)).stage("score")?;

    fs::create_dir_all(out_dir).stage("write output")?;
    for (format, name) in [
        (ReportFormat::Text, "report.txt"),
        (ReportFormat::Json, "report.json"),
        (ReportFormat::RadarCsv, "radar.csv"),
    ] {
        emit_report(&report, format, out_dir.join(name)).stage("write output")?;
    }
    print!("{}", render_report(&report, ReportFormat::Text).stage("score")?);
    Ok(())
}

fn cmd_predict(checkpoint: &Path, text: &str) -> Result<(), StageError> {
    let cp: Checkpoint = load_checkpoint(checkpoint).stage("load checkpoint")?;
    let categories = cp.categories.clone();
    let model = cp.into_model().stage("load checkpoint")?;
    if words(text).is_empty() {
        warn!("empty description; predicting from an all-padding input");
    }
    let tokens = tokenize(text, &model.embedding, model.config.max_len);
    let probs = model.forward(&tokens, Mode::Infer).stage("predict")?.into_data();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    for &i in order.iter().take(5) {
        println!("{}\t{:.6}", categories[i], probs[i]);
    }
    Ok(())
}
