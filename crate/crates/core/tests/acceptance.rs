//! Acceptance criteria, one PASS/FAIL/SKIP line each.
//!
//! Runs without the libtest harness so the lines always appear in
//! `cargo test` output. Exits non-zero if any criterion fails. Criteria
//! 5 and 6 also check the real dataset when `SERVENET_DATA_DIR` holds
//! `services.jsonl` and `glove.6B.200d.txt`.

use std::fmt::Display;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use servenet::baseline::{compare_split_methods, SplitCompareConfig, RANDOM, STRATIFIED};
use servenet::checkpoint::MAGIC;
use servenet::data::{
    confidence_interval, ingest, load_glove, preprocess, split, LengthStats, PreprocessConfig,
    ServiceRecord, SplitScheme, SplitSpec, TokenizedService,
};
use servenet::gradcheck::{max_relative_error, numeric_grad};
use servenet::metrics::{per_category_report, sigma, topn_accuracy, PredictionBatch};
use servenet::model::{Mode, ModelConfig};
use servenet::nn::{conv2d_forward, lstm_step, Activation, Conv2DParams, LSTMParams};
use servenet::optim::{train, AdamConfig, Parameters, TrainConfig};
use servenet::{Checkpoint, EmbeddingTable, ModelParams, SeededRng, ServeNet, Tensor};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: impl Display) -> Outcome {
    if ok {
        Outcome::Pass(detail.to_string())
    } else {
        Outcome::Fail(detail.to_string())
    }
}

fn uniform(rng: &mut SeededRng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_table(words: &[String], dim: usize, rng: &mut SeededRng) -> EmbeddingTable {
    let entries = words
        .iter()
        .map(|w| (w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    EmbeddingTable::from_entries(dim, entries).unwrap()
}

// ---------------------------------------------------------------------------
// 1. end-to-end gradient check on the toy preset

fn loss_of(model: &ServeNet, tokens: &[usize], target: usize) -> f64 {
    let p = model.forward(tokens, Mode::Infer).unwrap();
    -p.data()[target].max(1e-12).ln()
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::toy();
    let mut rng = SeededRng::seed_from_u64(11);
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let table = random_table(&words, cfg.embed_dim, &mut rng);
    let mut worst = (0.0f64, String::new());
    for case in 0..2 {
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        // Non-zero biases exercise every bias path.
        for t in params.tensors_mut() {
            if t.rank() == 1 {
                *t = uniform(&mut rng, t.dims());
            }
        }
        let model = ServeNet::new(cfg.clone(), params, table.clone()).unwrap();
        let tokens: Vec<usize> = (0..cfg.max_len).map(|_| rng.random_range(0..table.rows())).collect();
        let target = case % cfg.num_classes;
        let (_, grads) = model.backward(&tokens, target, &mut rng as &mut dyn RngCore).unwrap();
        let names: Vec<String> = model.params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (k, name) in names.iter().enumerate() {
            let x = model.params.tensors()[k].clone();
            let mut probe = model.clone();
            let numeric = numeric_grad(&x, |v| {
                *probe.params.tensors_mut()[k] = v.clone();
                loss_of(&probe, &tokens, target)
            });
            let err = max_relative_error(grads.tensors()[k], &numeric);
            if err > worst.0 {
                worst = (err, name.clone());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst.0 <= 1e-4 && secs < 30.0,
        format!("max relative error {:.2e} ({}), {secs:.2}s", worst.0, worst.1),
    )
}

// ---------------------------------------------------------------------------
// 2. layer oracles

fn conv_oracle(x: &Tensor, kernels: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (k, kh, kw) = (kernels.dims()[0], kernels.dims()[1], kernels.dims()[2]);
    let mut out = vec![0.0; h * w * k];
    for f in 0..k {
        for i in 0..h {
            for j in 0..w {
                let mut acc = bias.data()[f];
                for di in 0..kh {
                    for dj in 0..kw {
                        let (ii, jj) = (i as isize + di as isize - (kh / 2) as isize, j as isize + dj as isize - (kw / 2) as isize);
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        for ch in 0..c {
                            acc += x.at(&[ii as usize, jj as usize, ch]) * kernels.at(&[f, di, dj, ch]);
                        }
                    }
                }
                out[(i * w + j) * k + f] = acc;
            }
        }
    }
    out
}

fn lstm_oracle(x: &[f64], a: &[f64], c: &[f64], p: &LSTMParams<f64>) -> (Vec<f64>, Vec<f64>) {
    let h = a.len();
    let z: Vec<f64> = a.iter().chain(x).copied().collect();
    let lin = |w: &Tensor, b: &Tensor, i: usize| b.data()[i] + (0..z.len()).map(|j| w.at(&[i, j]) * z[j]).sum::<f64>();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut a_new = vec![0.0; h];
    let mut c_new = vec![0.0; h];
    for i in 0..h {
        let f = sig(lin(&p.w_f, &p.b_f, i));
        let u = sig(lin(&p.w_u, &p.b_u, i));
        let o = sig(lin(&p.w_o, &p.b_o, i));
        let cand = lin(&p.w_c, &p.b_c, i).tanh();
        c_new[i] = f * c[i] + u * cand;
        a_new[i] = o * c_new[i].tanh();
    }
    (a_new, c_new)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn layer_oracles() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(22);
    let (mut conv_err, mut lstm_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (h, w, c, k) = (rng.random_range(3..9), rng.random_range(3..9), rng.random_range(1..4), rng.random_range(1..5));
        let kh = [1, 3][rng.random_range(0..2)];
        let kw = [1, 3, 5][rng.random_range(0..3)].min(if w % 2 == 0 { w - 1 } else { w });
        let x = uniform(&mut rng, &[h, w, c]);
        let p = Conv2DParams::new(uniform(&mut rng, &[k, kh, kw, c]), uniform(&mut rng, &[k])).unwrap();
        let got = conv2d_forward(&x, &p, Activation::Linear).unwrap();
        conv_err = conv_err.max(max_abs_diff(got.data(), &conv_oracle(&x, &p.kernels, &p.bias)));

        let (hid, n) = (rng.random_range(1..6), rng.random_range(1..6));
        let mut lp = LSTMParams::zeros(hid, n);
        for t in lp.tensors_mut() {
            *t = uniform(&mut rng, t.dims());
        }
        let (xt, a, cp) = (uniform(&mut rng, &[n]), uniform(&mut rng, &[hid]), uniform(&mut rng, &[hid]));
        let (a1, c1, _) = lstm_step(&xt, &a, &cp, &lp).unwrap();
        let (ea, ec) = lstm_oracle(xt.data(), a.data(), cp.data(), &lp);
        lstm_err = lstm_err.max(max_abs_diff(a1.data(), &ea)).max(max_abs_diff(c1.data(), &ec));
    }
    check(
        conv_err <= 1e-12 && lstm_err <= 1e-12,
        format!("conv2d max |diff| {conv_err:.1e}, lstm_step max |diff| {lstm_err:.1e} over 20 instances each"),
    )
}

// ---------------------------------------------------------------------------
// 3. overfit sanity

/// 50-word vocabulary: 4 classes × 10 keywords plus 10 shared fillers.
fn synthetic_task(seed: u64) -> (EmbeddingTable, Vec<TokenizedService>) {
    let cfg = ModelConfig::toy();
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut words: Vec<String> = (0..4).flat_map(|c| (0..10).map(move |i| format!("k{c}_{i}"))).collect();
    words.extend((0..10).map(|i| format!("filler{i}")));
    let table = random_table(&words, cfg.embed_dim, &mut rng);
    let samples = (0..32)
        .map(|s| {
            let label = s % 4;
            let tokens = (0..cfg.max_len)
                .map(|j| {
                    let w = if j % 3 == 2 {
                        format!("filler{}", rng.random_range(0..10))
                    } else {
                        format!("k{label}_{}", rng.random_range(0..10))
                    };
                    table.id(&w).unwrap()
                })
                .collect();
            TokenizedService { tokens, label }
        })
        .collect();
    (table, samples)
}

fn toy_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        seed: 42,
        threads: 1,
        adam: AdamConfig {
            lr: 0.002,
            ..AdamConfig::default()
        },
    }
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let (table, data) = synthetic_task(33);
    let cfg = ModelConfig::toy();
    let params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(34)).unwrap();
    let mut model = ServeNet::new(cfg, params, table).unwrap();
    let mut reached = None;
    let history = match train(&mut model, &data, &toy_train_config(200), |_| {}) {
        Ok(h) => h,
        Err(e) => return Outcome::Fail(format!("training failed: {e}")),
    };
    let infer_top1 = |m: &ServeNet| {
        let rows: Vec<f64> = data
            .iter()
            .flat_map(|ex| m.forward(&ex.tokens, Mode::Infer).unwrap().into_data())
            .collect();
        let batch = PredictionBatch::new(
            Tensor::from_vec(vec![data.len(), 4], rows).unwrap(),
            data.iter().map(|ex| ex.label).collect(),
            (0..4).map(|c| format!("c{c}")).collect(),
        )
        .unwrap();
        topn_accuracy(&batch, 1).unwrap()
    };
    for r in &history.records {
        if r.top1 >= 100.0 && reached.is_none() {
            reached = Some(r.epoch);
        }
    }
    let final_top1 = infer_top1(&model);
    let secs = start.elapsed().as_secs_f64();
    check(
        final_top1 >= 100.0 && secs < 60.0,
        format!(
            "train top-1 {final_top1:.1}% after 200 epochs (first 100% epoch: {}), final loss {:.4}, {secs:.2}s",
            reached.map_or("none".into(), |e| e.to_string()),
            history.records.last().map_or(f64::NAN, |r| r.loss)
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. confidence interval

fn interval() -> Outcome {
    let stats = LengthStats {
        mean: 67.3211,
        stddev: 25.9841,
        count: 10957,
    };
    let (lo, hi) = confidence_interval(&stats, 0.90).unwrap();
    check(
        (lo - 24.5810).abs() <= 1e-3 && (hi - 110.0611).abs() <= 1e-3,
        format!("90% interval ({lo:.4}, {hi:.4})"),
    )
}

// ---------------------------------------------------------------------------
// 5 and 6. real-data checks (optional) and the synthetic split comparison

fn data_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("SERVENET_DATA_DIR")?);
    dir.join("services.jsonl").is_file().then_some(dir)
}

fn real_pipeline() -> Option<(Vec<ServiceRecord>, servenet::data::PreprocessStats)> {
    let dir = data_dir()?;
    let ingested = ingest(dir.join("services.jsonl")).ok()?;
    let glove = load_glove::<f64>(dir.join("glove.6B.200d.txt"), 200).ok();
    preprocess(ingested, glove.as_ref(), &PreprocessConfig::default()).ok()
}

fn pipeline_counts(real: Option<&(Vec<ServiceRecord>, servenet::data::PreprocessStats)>) -> Outcome {
    let Some((records, stats)) = real else {
        return Outcome::Skip("SERVENET_DATA_DIR/services.jsonl not available".into());
    };
    let c = &stats.counts;
    let got = [c.ingested, c.cleaned, c.top_categories, c.length_filtered];
    let spec = SplitSpec {
        scheme: SplitScheme::StratifiedRandom,
        test_fraction: 0.2024,
        seed: 42,
    };
    let (train, test) = match split(records, &spec) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("split failed: {e}")),
    };
    check(
        got == [15344, 15340, 10957, 10184]
            && (train.len() as i64 - 8123).abs() <= 50
            && (test.len() as i64 - 2061).abs() <= 50,
        format!("stage counts {got:?}, stratified split {}/{}", train.len(), test.len()),
    )
}

fn separable_corpus() -> Vec<ServiceRecord> {
    let mut out = Vec::new();
    for (cat, stem) in [("mapping", "geo"), ("payments", "pay"), ("music", "song"), ("weather", "rain")] {
        for i in 0..25 {
            out.push(ServiceRecord::new(format!("{stem} {stem}{} {stem}x", i % 5), cat));
        }
    }
    out
}

fn split_protocol(real: Option<&(Vec<ServiceRecord>, servenet::data::PreprocessStats)>) -> Outcome {
    let cfg = SplitCompareConfig {
        topn: 1,
        ..SplitCompareConfig::default()
    };
    let synthetic = match compare_split_methods(&separable_corpus(), &cfg) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(format!("synthetic comparison failed: {e}")),
    };
    let perfect = synthetic
        .rows
        .iter()
        .all(|r| r.train_mean == 100.0 && r.test_mean == 100.0 && r.train_std == 0.0 && r.test_std == 0.0);
    if !perfect {
        return Outcome::Fail(format!("synthetic corpus not 100/100 with zero spread: {:?}", synthetic.rows));
    }
    let Some((records, _)) = real else {
        return Outcome::Pass("synthetic corpus 100/100, zero spread in all 3 schemes (real dataset skipped)".into());
    };
    let table = match compare_split_methods(records, &SplitCompareConfig::default()) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(format!("real comparison failed: {e}")),
    };
    let (strat, rand) = (table.row(STRATIFIED).unwrap(), table.row(RANDOM).unwrap());
    check(
        (strat.test_mean - 75.69).abs() <= 2.0 && strat.test_std < rand.test_std,
        format!(
            "synthetic 100/100; real stratified Test_M {:.2} Test_V {:.4} vs random Test_V {:.4}",
            strat.test_mean, strat.test_std, rand.test_std
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. metrics fixtures

fn table3_column() -> Vec<f64> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/table3_servenet.csv");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

fn random_batch(rng: &mut SeededRng) -> PredictionBatch<f64> {
    let n = rng.random_range(1..40);
    let c = rng.random_range(2..12);
    let mut rows = Vec::with_capacity(n * c);
    for _ in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0..5) as f64 + 0.25).collect();
        let s: f64 = raw.iter().sum();
        rows.extend(raw.into_iter().map(|v| v / s));
    }
    PredictionBatch::new(
        Tensor::from_vec(vec![n, c], rows).unwrap(),
        (0..n).map(|_| rng.random_range(0..c)).collect(),
        (0..c).map(|i| format!("c{i}")).collect(),
    )
    .unwrap()
}

fn metrics_fixtures() -> Outcome {
    let column = table3_column();
    let s = sigma(&column);
    let mut rng = SeededRng::seed_from_u64(77);
    let mut violations = 0;
    for _ in 0..1000 {
        let b = random_batch(&mut rng);
        let mut prev = 0.0;
        for n in 1..=b.num_classes() {
            let acc = topn_accuracy(&b, n).unwrap();
            let r = per_category_report(&b, n).unwrap();
            let weighted = r
                .per_category
                .iter()
                .map(|c| c.accuracy * c.support.unwrap() as f64)
                .sum::<f64>()
                / b.len() as f64;
            if acc < prev || (weighted - acc).abs() > 1e-9 {
                violations += 1;
            }
            prev = acc;
        }
    }
    check(
        column.len() == 50 && (s - 11.69).abs() <= 0.05 && violations == 0,
        format!("sigma over {} categories {s:.4}; {violations} property violations in 1000 batches", column.len()),
    )
}

// ---------------------------------------------------------------------------
// 8. determinism

fn toy_run() -> (Vec<u8>, Vec<u8>) {
    let (table, data) = synthetic_task(88);
    let cfg = ModelConfig::toy();
    let params = ModelParams::init(&cfg, &mut SeededRng::seed_from_u64(42)).unwrap();
    let mut model = ServeNet::new(cfg, params, table).unwrap();
    let mut history = Vec::new();
    train(&mut model, &data, &toy_train_config(5), |r| {
        history.extend(serde_json::to_vec(r).unwrap());
        history.push(b'\n');
    })
    .unwrap();
    let categories = (0..4).map(|c| format!("c{c}")).collect();
    let cp = Checkpoint::from_model(&model, categories, 42, 5);
    (cp.to_bytes().unwrap(), history)
}

fn determinism() -> Outcome {
    let (a, ha) = toy_run();
    let (b, hb) = toy_run();
    check(
        a == b && ha == hb,
        format!("checkpoints {} bytes, history {} bytes, identical: {}", a.len(), ha.len(), a == b && ha == hb),
    )
}

// ---------------------------------------------------------------------------
// 9. checkpoint round-trip

fn checkpoint_round_trip() -> Outcome {
    let cfg = ModelConfig::toy();
    let mut rng = SeededRng::seed_from_u64(99);
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let table = random_table(&words, cfg.embed_dim, &mut rng);
    let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
    // Awkward values: subnormals, signed zero, extremes.
    params.fc2.b.data_mut().copy_from_slice(&[f64::MIN_POSITIVE / 3.0, -0.0, f64::MAX, -1e-300]);
    let model = ServeNet::new(cfg, params, table).unwrap();
    let cp = Checkpoint::from_model(&model, (0..4).map(|c| format!("c{c}")).collect(), 7, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.srvn");
    servenet::checkpoint::save_checkpoint(&path, &cp).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back: Checkpoint = servenet::checkpoint::load_checkpoint(&path).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let mut mismatched = 0;
    for ((_, a), (_, b)) in cp.params.named_tensors().into_iter().zip(back.params.named_tensors()) {
        mismatched += usize::from(bits(a) != bits(b));
    }
    mismatched += usize::from(bits(cp.embedding.matrix()) != bits(back.embedding.matrix()));
    // The first tensor's first value sits right after its name, rank and dims.
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut pos = 12 + header_len;
    let name_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4 + name_len;
    let rank = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4 + 8 * rank;
    let first = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
    let le_ok = &bytes[..4] == MAGIC && first.to_bits() == cp.params.conv1.kernels.data()[0].to_bits();
    check(
        mismatched == 0 && le_ok && back == cp,
        format!("{} tensors bit-identical after save/load, little-endian layout verified: {le_ok}", 1 + cp.params.named_tensors().len() - mismatched),
    )
}

fn main() {
    let real = real_pipeline();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 gradient correctness", Box::new(gradient_check)),
        ("2 layer oracles", Box::new(layer_oracles)),
        ("3 overfit sanity", Box::new(overfit)),
        ("4 confidence interval", Box::new(interval)),
        ("5 pipeline counts", Box::new(|| pipeline_counts(real.as_ref()))),
        ("6 split-method protocol", Box::new(|| split_protocol(real.as_ref()))),
        ("7 metrics fixtures", Box::new(metrics_fixtures)),
        ("8 determinism", Box::new(determinism)),
        ("9 checkpoint round-trip", Box::new(checkpoint_round_trip)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(d) => println!("PASS  {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
