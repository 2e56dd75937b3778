//! Acceptance suite: one line per criterion.
//!
//! Quick criteria (1–3) always run. The long-running ones (4–9) need the
//! datasets and hours of CPU, so they run only with `F3_ACCEPTANCE=full`
//! or when named explicitly: `cargo test --release --test acceptance -- 4 9`.
//! Datasets are read from `$F3_DATA_DIR` (default: `<workspace>/data`); a
//! criterion whose data is missing reports BLOCKED and counts as not passed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use f3::costmodel::{fma_totals, memory_model, savings_equal_width, ArchSpec};
use f3::data::{load_mnist_dir, make_batches, Dataset, Split};
use f3::feedback::{init_feedback, ErrorMode, ErrorSignal, ErrorTransform, FeedbackInit};
use f3::model::{backprop, forward, loss_gradient, Activation, LayerParams, LossKind, Network};
use f3::tensor::probe;
use f3::trainer::{run_batches, train_batch, Algorithm, Optimizer, OptimizerKind, TrainState};
use f3::DenseVector;
use f3_cli::config::RawConfig;
use f3_cli::experiment::{self, RunOutcome};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_NETS: usize = 120;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero gradients.
const GRAD_FLOOR: f64 = 1e-6;

const MNIST_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq)]
enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
    Skipped(String),
}

impl Verdict {
    fn check(ok: bool, detail: String) -> Self {
        if ok {
            Verdict::Pass(detail)
        } else {
            Verdict::Fail(detail)
        }
    }

    fn counts_as_failure(&self) -> bool {
        matches!(self, Verdict::Fail(_) | Verdict::Blocked(_))
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    std::env::var_os("F3_DATA_DIR").map_or_else(|| workspace_root().join("data"), PathBuf::from)
}

fn out_dir() -> PathBuf {
    workspace_root().join("target/acceptance")
}

fn missing(files: &[PathBuf]) -> Option<String> {
    let absent: Vec<String> = files
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    (!absent.is_empty()).then(|| format!("dataset not found: {}", absent.join(", ")))
}

fn mnist_files() -> Vec<PathBuf> {
    let d = data_dir().join("mnist");
    [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ]
    .iter()
    .map(|f| d.join(f))
    .collect()
}

fn sgemm_files() -> Vec<PathBuf> {
    vec![data_dir().join("sgemm/sgemm_product.csv")]
}

fn cifar_files() -> Vec<PathBuf> {
    let d = data_dir().join("cifar10");
    let d = if d.join("cifar-10-batches-bin").is_dir() {
        d.join("cifar-10-batches-bin")
    } else {
        d
    };
    let mut v: Vec<PathBuf> = (1..=5).map(|i| d.join(format!("data_batch_{i}.bin"))).collect();
    v.push(d.join("test_batch.bin"));
    v
}

/// Runs one experiment from `key=value` lines on top of the data and
/// output directories.
fn run_cfg(name: &str, lines: &[String]) -> Result<RunOutcome, String> {
    let mut raw = RawConfig::default();
    raw.set("data_dir", &data_dir().display().to_string())
        .map_err(|e| e.to_string())?;
    raw.set("output", &out_dir().join(name).display().to_string())
        .map_err(|e| e.to_string())?;
    for l in lines {
        raw.set_pair(l).map_err(|e| e.to_string())?;
    }
    let cfg = raw.resolve().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let out = experiment::run(&cfg).map_err(|e| e.one_line())?;
    eprintln!("  [{name}] done in {:.0}s", t0.elapsed().as_secs_f64());
    Ok(out)
}

fn lines(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- 1

fn loss_of(net: &Network<f64>, x: &DenseVector<f64>, t: &DenseVector<f64>, kind: LossKind) -> f64 {
    kind.eval_slice(net.predict(x).unwrap().as_slice(), t.as_slice())
}

/// Largest relative error between backprop and central differences over
/// every parameter of one random network.
fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.gen_range(1..=3);
    let widths: Vec<usize> = (0..=layers).map(|_| rng.gen_range(1..=8)).collect();
    let kind = if rng.gen_bool(0.5) {
        LossKind::Bce
    } else {
        LossKind::Mse
    };
    let out_act = if kind == LossKind::Bce {
        Activation::Sigmoid
    } else {
        Activation::Identity
    };
    let mut net = Network::<f64>::init_uniform(&widths, Activation::Tanh, out_act, &mut rng).unwrap();
    for l in net.layers_mut() {
        for b in l.biases.as_mut_slice() {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let x = DenseVector::from_vec((0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let t = DenseVector::from_vec((0..widths[layers]).map(|_| rng.gen_range(0.0..1.0)).collect());
    let trace = forward(&net, &x).unwrap();
    let dy = loss_gradient(kind, trace.output(), &t).unwrap();
    let grads = backprop(&net, &trace, &dy).unwrap();
    let mut worst = 0.0f64;
    for li in 0..layers {
        let n_w = net.layer(li).weights.as_slice().len();
        let n_b = net.layer(li).biases.len();
        for p in 0..n_w + n_b {
            let analytic = if p < n_w {
                grads.layers[li].weights.as_slice()[p]
            } else {
                grads.layers[li].biases.as_slice()[p - n_w]
            };
            let slot = |net: &mut Network<f64>| -> *mut f64 {
                let l: &mut LayerParams<f64> = net.layer_mut(li);
                if p < n_w {
                    &mut l.weights.as_mut_slice()[p]
                } else {
                    &mut l.biases.as_mut_slice()[p - n_w]
                }
            };
            let orig = unsafe { *slot(&mut net) };
            unsafe { *slot(&mut net) = orig + GRAD_STEP };
            let up = loss_of(&net, &x, &t, kind);
            unsafe { *slot(&mut net) = orig - GRAD_STEP };
            let down = loss_of(&net, &x, &t, kind);
            unsafe { *slot(&mut net) = orig };
            let numeric = (up - down) / (2.0 * GRAD_STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

fn criterion_1() -> Verdict {
    let worst = (0..GRAD_NETS as u64).map(gradient_check).fold(0.0, f64::max);
    Verdict::check(
        worst <= GRAD_TOL,
        format!("{GRAD_NETS} random nets (<=3 layers, widths <=8, f64, step {GRAD_STEP:e}): max rel err {worst:.2e} (tol {GRAD_TOL:e})"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for (w, delta_pct, total_pct, saved) in [(200u64, 9344, 2080, 208_000i64), (1024, 9870, 2409, 2_712_960)] {
        let arch = ArchSpec::equal_width(5, 100, w, 10, 200, 10_000).unwrap();
        let r = fma_totals(&arch);
        let (d_eq, t_eq) = savings_equal_width(5, 100, w, 10).unwrap();
        let pct = |x: Ratio<i64>| (x * Ratio::from_integer(10_000)).round().to_integer();
        let mem = memory_model(&arch).2;
        let this = pct(r.savings_delta_relative) == delta_pct
            && pct(r.savings_total_relative) == total_pct
            && d_eq == r.savings_delta_relative
            && t_eq == r.savings_total_relative
            && mem == saved
            && r.mem_saved_bytes == saved;
        ok &= this;
        notes.push(format!(
            "w={w}: delta {} ({:.4}) total {} ({:.4}) mem_saved {mem}",
            r.savings_delta_relative,
            r.savings_delta_f64(),
            r.savings_total_relative,
            r.savings_total_f64()
        ));
    }
    let r = fma_totals(&ArchSpec::equal_width(5, 100, 200, 10, 1, 0).unwrap());
    ok &= r.total_bp == 548_000 && r.total_f3 == 434_000 && r.fma_backward_bp == 122_000 && r.fma_backward_f3 == 8000;
    notes.push(format!("BP {} F3 {}", r.total_bp, r.total_f3));
    Verdict::check(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 3

fn mnist_subset(n: usize) -> Result<(Dataset<f32>, Dataset<f32>), String> {
    let (train, test) = load_mnist_dir::<f32>(&data_dir().join("mnist")).map_err(|e| e.to_string())?;
    Ok((train.subset(n), test.subset(n)))
}

/// Random features with labels from a fixed random linear map.
fn synthetic(n: usize, width: usize, classes: usize) -> Dataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let proj: Vec<f32> = (0..width * classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features: Vec<f32> = (0..n * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = features
        .chunks(width)
        .map(|x| {
            let score = |c: usize| x.iter().zip(&proj[c * width..]).map(|(a, b)| a * b).sum::<f32>();
            (0..classes).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap() as u8
        })
        .collect::<Vec<u8>>();
    Dataset::from_labels(features, width, &labels, classes, Split::Train).unwrap()
}

fn fresh_state(alg: Algorithm, train: &Dataset<f32>, scheme: FeedbackInit) -> TrainState<f32> {
    let widths = [train.width(), 500, train.classes()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Network::<f32>::init_uniform(&widths, Activation::Tanh, Activation::Sigmoid, &mut rng).unwrap();
    let bank = init_feedback::<f32>(&widths[1..2], train.classes(), scheme, 2).unwrap();
    let opt = Optimizer::new(OptimizerKind::Adam, 1e-3, &net).unwrap();
    let mut st = TrainState::new(net, alg, LossKind::Bce, opt, Some(bank)).unwrap();
    if matches!(alg, Algorithm::F3(_)) {
        st.init_store(train, false).unwrap();
    }
    st
}

fn criterion_3() -> Verdict {
    let (train, source) = if missing(&mnist_files()).is_none() {
        match mnist_subset(1000) {
            Ok((train, _)) => (train, "mnist[..1000]"),
            Err(e) => return Verdict::Fail(e),
        }
    } else {
        (synthetic(1000, 64, 10), "synthetic 1000x64 (mnist absent)")
    };
    let mut notes = vec![format!("data {source}")];

    // (a) DFA against F³ whose store is overwritten with the current error
    let mut dfa = fresh_state(Algorithm::Dfa, &train, FeedbackInit::Kaiming);
    let mut f3 = fresh_state(Algorithm::F3(ErrorMode::LOSS), &train, FeedbackInit::Kaiming);
    let mut identical = true;
    for epoch in 0..5 {
        let batches = make_batches(&train, 50, 100 + epoch).unwrap();
        run_batches(&mut dfa, &train, &batches).unwrap();
        for b in &batches {
            let y = f3.network.predict_batch(&train.gather_features(&b.indices)).unwrap();
            for (s, &i) in b.indices.iter().enumerate() {
                let col: Vec<f32> = (0..y.rows()).map(|r| y.get(r, s)).collect();
                let e = loss_gradient(
                    LossKind::Bce,
                    &DenseVector::from_vec(col),
                    &DenseVector::from_slice(train.target(i)),
                )
                .unwrap();
                f3.store.as_mut().unwrap().store_slice(i, e.as_slice()).unwrap();
            }
            train_batch(&mut f3, &train, b).unwrap();
        }
        f3.store.as_mut().unwrap().advance_epoch();
        identical &= f3.network == dfa.network;
    }
    notes.push(format!("(a) dfa==f3-zero-delay over 5 epochs: {identical}"));

    // (b) feedback banks never change; (d) no transposed forward weights
    let mut frozen = true;
    let mut transposed_w = 0usize;
    for alg in [
        Algorithm::F3(ErrorMode::new(ErrorSignal::Error, ErrorTransform::OneHot)),
        Algorithm::Dfa,
        Algorithm::Drtp,
    ] {
        let mut st = fresh_state(alg, &train, FeedbackInit::Kaiming);
        let before = st.feedback.as_ref().unwrap().checksum();
        let w_ids: Vec<usize> = st.network.layers().iter().map(|l| l.weights.buffer_id()).collect();
        probe::start();
        for epoch in 0..2 {
            let batches = make_batches(&train, 50, epoch).unwrap();
            run_batches(&mut st, &train, &batches).unwrap();
        }
        let log = probe::finish();
        frozen &= st.feedback.as_ref().unwrap().checksum() == before;
        if alg != Algorithm::Dfa {
            transposed_w += log.transposed_operands.iter().filter(|id| w_ids.contains(id)).count();
        }
    }
    notes.push(format!("(b) feedback checksums unchanged: {frozen}"));
    notes.push(format!("(d) transposed W products in f3/drtp: {transposed_w}"));

    // (c) LLO keeps the hidden layer at its initialization
    let mut llo = fresh_state(Algorithm::Llo, &train, FeedbackInit::Kaiming);
    let hidden_before = llo.network.hidden_checksum();
    let out_before = llo.network.checksum();
    for epoch in 0..3 {
        let batches = make_batches(&train, 50, epoch).unwrap();
        run_batches(&mut llo, &train, &batches).unwrap();
    }
    let hidden_same = llo.network.hidden_checksum() == hidden_before && llo.network.checksum() != out_before;
    notes.push(format!("(c) llo hidden checksum unchanged: {hidden_same}"));

    Verdict::check(
        identical && frozen && transposed_w == 0 && hidden_same,
        notes.join("; "),
    )
}

// ---------------------------------------------------------------- 4, 9

const MNIST_ALGS: [(&str, &str); 4] = [
    ("bp", "algorithm=bp"),
    ("f3_error", "algorithm=f3"),
    ("drtp", "algorithm=drtp"),
    ("llo", "algorithm=llo"),
];

struct Ctx {
    mnist_runs: Vec<(String, u64, RunOutcome)>,
}

fn mnist_run_name(alg: &str, seed: u64) -> String {
    format!("c4_mnist_{alg}_seed{seed}")
}

fn criterion_4(ctx: &mut Ctx) -> Verdict {
    if let Some(m) = missing(&mnist_files()) {
        return Verdict::Blocked(m);
    }
    for seed in MNIST_SEEDS {
        for (name, alg) in MNIST_ALGS {
            let run = match run_cfg(
                &mnist_run_name(name, seed),
                &lines(&["dataset=mnist", alg, &format!("seed={seed}")]),
            ) {
                Ok(r) => r,
                Err(e) => return Verdict::Fail(e),
            };
            ctx.mnist_runs.push((name.to_string(), seed, run));
        }
    }
    let acc = |alg: &str, seed: u64| {
        100.0
            * ctx
                .mnist_runs
                .iter()
                .find(|(a, s, _)| a == alg && *s == seed)
                .and_then(|(_, _, r)| r.best_test_accuracy)
                .unwrap_or(f64::NAN)
    };
    let mean = |alg: &str| MNIST_SEEDS.iter().map(|&s| acc(alg, s)).sum::<f64>() / MNIST_SEEDS.len() as f64;
    let (bp, f3, drtp, llo) = (mean("bp"), mean("f3_error"), mean("drtp"), mean("llo"));
    let ordered = MNIST_SEEDS.iter().all(|&s| {
        acc("bp", s) > acc("f3_error", s) && acc("f3_error", s) > acc("drtp", s) && acc("drtp", s) > acc("llo", s)
    });
    let mut detail = format!(
        "mean best acc over seeds {MNIST_SEEDS:?}: BP {bp:.2} (>=97.9) F3-Error {f3:.2} ([96.5,97.7]) DRTP {drtp:.2} ([95.0,96.4]) LLO {llo:.2} ([92.8,94.2]); per-seed ordering {ordered}; per seed:"
    );
    for s in MNIST_SEEDS {
        let _ = write!(
            detail,
            " s{s}=[{:.2},{:.2},{:.2},{:.2}]",
            acc("bp", s),
            acc("f3_error", s),
            acc("drtp", s),
            acc("llo", s)
        );
    }
    let ok = bp >= 97.9
        && (96.5..=97.7).contains(&f3)
        && (95.0..=96.4).contains(&drtp)
        && (92.8..=94.2).contains(&llo)
        && ordered;
    Verdict::check(ok, detail)
}

fn criterion_9(ctx: &mut Ctx) -> Verdict {
    if let Some(m) = missing(&mnist_files()) {
        return Verdict::Blocked(m);
    }
    let seed = MNIST_SEEDS[0];
    let first = out_dir().join(mnist_run_name("f3_error", seed)).join("metrics.csv");
    if !ctx.mnist_runs.iter().any(|(a, s, _)| a == "f3_error" && *s == seed) {
        if let Err(e) = run_cfg(
            &mnist_run_name("f3_error", seed),
            &lines(&["dataset=mnist", "algorithm=f3", &format!("seed={seed}")]),
        ) {
            return Verdict::Fail(e);
        }
    }
    if let Err(e) = run_cfg(
        "c9_mnist_f3_error_repeat",
        &lines(&["dataset=mnist", "algorithm=f3", &format!("seed={seed}")]),
    ) {
        return Verdict::Fail(e);
    }
    let second = out_dir().join("c9_mnist_f3_error_repeat/metrics.csv");
    let (a, b) = (std::fs::read(&first), std::fs::read(&second));
    match (a, b) {
        (Ok(a), Ok(b)) => Verdict::check(
            a == b && !a.is_empty(),
            format!(
                "F3-Error seed {seed} rerun: metrics.csv {} bytes, byte-identical {}",
                a.len(),
                a == b
            ),
        ),
        _ => Verdict::Fail("metrics files missing".into()),
    }
}

// ---------------------------------------------------------------- 5, 7

fn sgemm_chance() -> Result<f64, String> {
    let (_, test) = f3::data::load_sgemm::<f64>(&sgemm_files()[0], 0).map_err(|e| e.to_string())?;
    // targets are standardized with train statistics, so the train mean is 0
    Ok(test.targets().iter().map(|t| t * t).sum::<f64>() / test.len() as f64)
}

fn criterion_5() -> Verdict {
    if let Some(m) = missing(&sgemm_files()) {
        return Verdict::Blocked(m);
    }
    let algs = [
        ("bp", "algorithm=bp", None),
        ("f3_error", "algorithm=f3", Some("signal=error")),
        ("f3_loss", "algorithm=f3", Some("signal=loss_gradient")),
        ("drtp", "algorithm=drtp", None),
        ("llo", "algorithm=llo", None),
    ];
    let mut best = Vec::new();
    for (name, alg, extra) in algs {
        let mut l = lines(&["dataset=sgemm", alg, "seed=0"]);
        if let Some(x) = extra {
            l.push(x.to_string());
        }
        match run_cfg(&format!("c5_sgemm_{name}"), &l) {
            Ok(r) => best.push(r.best_test_loss.unwrap_or(f64::NAN)),
            Err(e) => return Verdict::Fail(e),
        }
    }
    let (bp, f3e, f3l, drtp, llo) = (best[0], best[1], best[2], best[3], best[4]);
    let f3 = f3e.min(f3l);
    let gap = (drtp - f3) / (drtp - bp);
    Verdict::check(
        f3 <= 0.02 && drtp >= 0.30 && (0.20..=0.32).contains(&llo) && bp <= 0.005 && gap >= 0.90,
        format!(
            "best test MSE: BP {bp:.4} (<=0.005) F3 {f3:.4} [error {f3e:.4}, loss {f3l:.4}] (<=0.02) DRTP {drtp:.4} (>=0.30) LLO {llo:.4} ([0.20,0.32]); gap reduction {:.1}% (>=90%)",
            100.0 * gap
        ),
    )
}

const DEPTH_EPOCHS: usize = 20;

fn criterion_7() -> Verdict {
    if let Some(m) = missing(&sgemm_files()) {
        return Verdict::Blocked(m);
    }
    let chance = match sgemm_chance() {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(e),
    };
    let mut detail = format!("chance MSE {chance:.4}, {DEPTH_EPOCHS} epochs;");
    let mut at50 = (f64::NAN, f64::NAN);
    for depth in [1, 10, 50] {
        let mut pair = [f64::NAN; 2];
        for (k, alg) in ["algorithm=bp", "algorithm=f3"].iter().enumerate() {
            let l = lines(&[
                "dataset=sgemm",
                alg,
                &format!("depth={depth}"),
                &format!("epochs={DEPTH_EPOCHS}"),
                "seed=0",
            ]);
            match run_cfg(&format!("c7_sgemm_{}_d{depth}", &alg[10..]), &l) {
                Ok(r) => pair[k] = r.best_test_loss.unwrap_or(f64::NAN),
                Err(e) => return Verdict::Fail(e),
            }
        }
        let _ = write!(detail, " depth {depth}: BP {:.4} F3 {:.4};", pair[0], pair[1]);
        if depth == 50 {
            at50 = (pair[0], pair[1]);
        }
    }
    let _ = write!(
        detail,
        " gate at depth 50: BP >= {:.4}, F3 <= {:.4}",
        0.9 * chance,
        0.5 * chance
    );
    Verdict::check(at50.0 >= 0.9 * chance && at50.1 <= 0.5 * chance, detail)
}

// ---------------------------------------------------------------- 6

const INIT_EPOCHS: usize = 30;

fn criterion_6() -> Verdict {
    if let Some(m) = missing(&mnist_files()) {
        return Verdict::Blocked(m);
    }
    let mut best = Vec::new();
    for scheme in ["kaiming", "trinomial", "binomial", "pm_identity"] {
        let l = lines(&[
            "dataset=mnist",
            "algorithm=f3",
            &format!("feedback_init={scheme}"),
            &format!("epochs={INIT_EPOCHS}"),
            "seed=0",
        ]);
        match run_cfg(&format!("c6_mnist_init_{scheme}"), &l) {
            Ok(r) => best.push(r.best_test_loss.unwrap_or(f64::NAN)),
            Err(e) => return Verdict::Fail(e),
        }
    }
    let (k, t, b, p) = (best[0], best[1], best[2], best[3]);
    Verdict::check(
        t <= 1.05 * k && b >= 2.0 * k && p >= 2.0 * k,
        format!(
            "best test loss ({INIT_EPOCHS} epochs): kaiming {k:.5} trinomial {t:.5} ({:.3}x, <=1.05) binomial {b:.5} ({:.2}x, >=2) pm_identity {p:.5} ({:.2}x, >=2)",
            t / k,
            b / k,
            p / k
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Verdict {
    if let Some(m) = missing(&cifar_files()) {
        return Verdict::Blocked(m);
    }
    let algs = [
        ("bp", vec!["algorithm=bp"]),
        ("dfa", vec!["algorithm=dfa"]),
        ("drtp", vec!["algorithm=drtp"]),
        ("f3_error", vec!["algorithm=f3", "signal=error"]),
        ("f3_loss", vec!["algorithm=f3", "signal=loss_gradient"]),
        ("llo", vec!["algorithm=llo"]),
    ];
    let mut accs = Vec::new();
    for (name, extra) in &algs {
        let mut l = lines(&["dataset=cifar10", "train_subset=5000", "epochs=20", "seed=0"]);
        l.extend(extra.iter().map(|s| s.to_string()));
        match run_cfg(&format!("c8_cifar_{name}"), &l) {
            Ok(r) => accs.push((name.to_string(), 100.0 * r.best_test_accuracy.unwrap_or(f64::NAN))),
            Err(e) => return Verdict::Fail(e),
        }
    }
    let all_above = accs.iter().all(|(_, a)| *a >= 25.0);
    let get = |n: &str| accs.iter().find(|(a, _)| a == n).map_or(f64::NAN, |x| x.1);
    let detail = accs
        .iter()
        .map(|(n, a)| format!("{n} {a:.2}"))
        .collect::<Vec<_>>()
        .join(" ");
    Verdict::check(
        all_above && get("f3_error") > get("llo"),
        format!("best acc on 5000-sample subset, 20 epochs (>=25.0 each, f3_error > llo): {detail}"),
    )
}

// ----------------------------------------------------------------

const QUICK: [u32; 3] = [1, 2, 3];

fn main() -> ExitCode {
    let requested: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let full = std::env::var("F3_ACCEPTANCE").is_ok_and(|v| v == "full");
    let wanted = |c: u32| {
        if requested.is_empty() {
            full || QUICK.contains(&c)
        } else {
            requested.contains(&c)
        }
    };
    let mut ctx = Ctx { mnist_runs: Vec::new() };
    let mut failed = 0;
    for c in 1..=9u32 {
        let t0 = Instant::now();
        let verdict = if !wanted(c) {
            Verdict::Skipped("long-running; set F3_ACCEPTANCE=full or name the criterion".into())
        } else {
            match c {
                1 => criterion_1(),
                2 => criterion_2(),
                3 => criterion_3(),
                4 => criterion_4(&mut ctx),
                5 => criterion_5(),
                6 => criterion_6(),
                7 => criterion_7(),
                8 => criterion_8(),
                _ => criterion_9(&mut ctx),
            }
        };
        if verdict.counts_as_failure() {
            failed += 1;
        }
        let secs = t0.elapsed().as_secs_f64();
        let (tag, detail) = match &verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Blocked(d) => ("BLOCKED", d),
            Verdict::Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {c}: {tag} ({secs:.1}s) {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria not passed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
