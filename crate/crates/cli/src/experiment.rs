//! Single runs and grid sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use f3::data::{self, Dataset, Scaling};
use f3::feedback::init_feedback;
use f3::model::{Activation, Network};
use f3::trainer::{evaluate, run_epoch, Algorithm, Evaluation, Optimizer, TrainState};
use f3::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetTag, ExperimentConfig, Precision, RawConfig, StoreInit};
use crate::CliError;

pub const METRICS_HEADER: &str = "epoch,train_loss,test_loss,test_accuracy,wall_time_s";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    /// Fraction correct; `None` for regression.
    pub test_accuracy: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    /// Test evaluation before the first update.
    pub initial: Evaluation,
    pub best_test_loss: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Feedback-bank checksums before and after training, when a bank exists.
    pub feedback_checksums: Option<(u64, u64)>,
}

/// Train and test splits for the configured dataset, both standardized with
/// training statistics, then cut to the configured subset sizes.
pub fn load_dataset<T: Scalar>(cfg: &ExperimentConfig) -> Result<(Dataset<T>, Dataset<T>, String), CliError> {
    let dir = cfg.data_dir.join(cfg.dataset.name());
    let (train, test, note) = match cfg.dataset {
        DatasetTag::Mnist => {
            let (tr, te) = data::load_mnist_dir_scaled(&dir, cfg.scaling)?;
            (tr, te, image_note(cfg.scaling))
        }
        DatasetTag::Cifar10 => {
            let (tr, te) = data::load_cifar10_dir_scaled(&dir, cfg.scaling)?;
            (tr, te, image_note(cfg.scaling))
        }
        DatasetTag::Census => {
            let load = data::load_census(&dir.join("adult.data"), &dir.join("adult.test"))?;
            let note = format!(
                "numeric columns standardized, categorical one-hot over train vocabulary ({} features), {} malformed rows skipped",
                load.encoder.width(),
                load.skipped_rows
            );
            (load.train, load.test, note)
        }
        DatasetTag::Sgemm => {
            let (tr, te) = data::load_sgemm(&dir.join("sgemm_product.csv"), cfg.split_seed)?;
            let note = format!(
                "target = mean of 4 runs; seeded 80/20 split (split_seed={}); features and target standardized",
                cfg.split_seed
            );
            (tr, te, note)
        }
    };
    let cut = |ds: Dataset<T>, n: usize| if n == 0 { ds } else { ds.subset(n) };
    Ok((cut(train, cfg.train_subset), cut(test, cfg.test_subset), note))
}

fn image_note(scaling: Scaling) -> String {
    let how = match scaling {
        Scaling::PerFeature => "per-feature",
        Scaling::Pooled => "pooled (one mean/std over all pixels)",
    };
    format!("pixels/255 then {how} standardization (train statistics)")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn metrics_csv(records: &[MetricsRecord], with_wall_time: bool) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let wall = if with_wall_time {
            r.wall_time_s.to_string()
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.test_loss,
            fmt_opt(r.test_accuracy),
            wall
        );
    }
    s
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Trains one configuration and writes `metrics.csv`, `timing.csv`,
/// `summary.txt` and `config.cfg` into its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg),
        Precision::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let (train, test, data_note) = load_dataset::<T>(cfg)?;
    let seeds = cfg.seeds();
    let c = train.classes();
    let mut widths = vec![train.width()];
    widths.extend(std::iter::repeat_n(cfg.width, cfg.depth));
    widths.push(c);
    let output = if cfg.dataset.is_regression() {
        Activation::Identity
    } else {
        Activation::Sigmoid
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.forward);
    let net = Network::<T>::init_uniform(&widths, Activation::Tanh, output, &mut rng)?;
    let feedback = if cfg.algorithm.needs_feedback() && cfg.depth > 0 {
        Some(init_feedback::<T>(
            &widths[1..widths.len() - 1],
            c,
            cfg.feedback_init,
            seeds.feedback,
        )?)
    } else {
        None
    };
    let checksum_before = feedback.as_ref().map(|b| b.checksum());
    let optimizer = Optimizer::new(cfg.optimizer, cfg.lr, &net)?;
    let mut state = TrainState::new(net, cfg.algorithm, train.loss(), optimizer, feedback)?;
    if matches!(cfg.algorithm, Algorithm::F3(_)) {
        state.init_store(&train, cfg.store_init == StoreInit::Inference)?;
    }
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;

    let initial = evaluate(&state.network, &test)?;
    log::info!(
        "{} {} on {}: {} train / {} test samples, widths {:?}",
        cfg.algorithm,
        cfg.precision.name(),
        cfg.dataset.name(),
        train.len(),
        test.len(),
        widths
    );
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let m = run_epoch(
            &mut state,
            &train,
            cfg.batch_size,
            seeds.shuffle.wrapping_add(epoch as u64),
        )?;
        let ev = evaluate(&state.network, &test)?;
        let wall = t0.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}/{}: train {:.5} test {:.5}{} ({wall:.1}s)",
            cfg.epochs,
            m.train_loss,
            ev.loss,
            ev.accuracy
                .map_or_else(String::new, |a| format!(" acc {:.2}%", 100.0 * a))
        );
        records.push(MetricsRecord {
            epoch,
            train_loss: m.train_loss,
            test_loss: ev.loss,
            test_accuracy: ev.accuracy,
            wall_time_s: wall,
        });
    }
    let checksum_after = state.feedback.as_ref().map(|b| b.checksum());

    let best_test_loss = records.iter().map(|r| r.test_loss).reduce(f64::min);
    let best_test_accuracy = records.iter().filter_map(|r| r.test_accuracy).reduce(f64::max);

    write_atomic(
        &cfg.output.join("metrics.csv"),
        &metrics_csv(&records, cfg.record_wall_time),
    )?;
    let mut timing = String::from("epoch,wall_time_s\n");
    for r in &records {
        let _ = writeln!(timing, "{},{}", r.epoch, r.wall_time_s);
    }
    write_atomic(&cfg.output.join("timing.csv"), &timing)?;
    write_atomic(&cfg.output.join("config.cfg"), &cfg.to_cfg_text())?;

    let mut summary = String::new();
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
    let _ = writeln!(summary, "best_test_loss={}", opt(best_test_loss));
    let _ = writeln!(summary, "best_test_accuracy={}", opt(best_test_accuracy));
    let _ = writeln!(summary, "initial_test_loss={}", initial.loss);
    let _ = writeln!(summary, "initial_test_accuracy={}", opt(initial.accuracy));
    let _ = writeln!(summary, "epochs_completed={}", records.len());
    let _ = writeln!(summary, "seed.base={}", cfg.seed);
    let _ = writeln!(summary, "seed.forward={}", seeds.forward);
    let _ = writeln!(summary, "seed.feedback={}", seeds.feedback);
    let _ = writeln!(summary, "seed.shuffle={} (+epoch)", seeds.shuffle);
    let _ = writeln!(summary, "data.train_samples={}", train.len());
    let _ = writeln!(summary, "data.test_samples={}", test.len());
    let _ = writeln!(summary, "data.features={}", train.width());
    let _ = writeln!(summary, "data.preprocessing={data_note}");
    let _ = writeln!(summary, "network.widths={widths:?}");
    let _ = writeln!(summary, "network.activations=tanh hidden, {} output", output.name());
    let _ = writeln!(summary, "loss={}", train.loss());
    if let Some(cs) = checksum_before {
        let _ = writeln!(summary, "feedback.checksum={cs:016x}");
    }
    if cfg.algorithm.needs_feedback() {
        let _ = writeln!(
            summary,
            "note=error-information transforms are applied to f3 only; dfa uses the raw current loss gradient"
        );
    }
    for (k, v) in cfg.pairs() {
        let _ = writeln!(summary, "config.{k}={v}");
    }
    write_atomic(&cfg.output.join("summary.txt"), &summary)?;

    Ok(RunOutcome {
        dir: cfg.output.clone(),
        records,
        initial,
        best_test_loss,
        best_test_accuracy,
        train_samples: train.len(),
        test_samples: test.len(),
        feedback_checksums: checksum_before.zip(checksum_after),
    })
}

/// Axes a grid may sweep.
pub const GRID_AXES: &[&str] = &["lr", "depth", "width", "algorithm", "feedback_init", "seed"];

/// Seed offset between grid points (the 64-bit golden-ratio constant).
const GRID_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub coords: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

/// Parses `name=v1,v2,…`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("axis must look like name=v1,v2; got {spec:?}")))?;
    let name = name.trim();
    if !GRID_AXES.contains(&name) {
        return Err(CliError::usage(format!(
            "cannot sweep {name:?}; axes are {GRID_AXES:?}"
        )));
    }
    let values: Vec<String> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        return Err(CliError::usage(format!("axis {name} has no values")));
    }
    Ok((name.to_string(), values))
}

/// Cartesian product of `axes` over `template`, first axis slowest. Point
/// `i` writes to `<output>/point_<i>` and, unless `seed` is itself an axis,
/// runs with seed `base + i·stride` (point 0 keeps the base seed).
pub fn expand_grid(template: &RawConfig, axes: &[(String, Vec<String>)]) -> Result<Vec<GridPoint>, CliError> {
    if let Some((name, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(CliError::usage(format!("axis {name} has no values")));
    }
    let base = template.resolve()?;
    let sweeps_seed = axes.iter().any(|(n, _)| n == "seed");
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut raw = template.clone();
        let mut coords = Vec::with_capacity(axes.len());
        let mut rem = index;
        let mut picks = vec![0; axes.len()];
        for (a, (_, values)) in axes.iter().enumerate().rev() {
            picks[a] = rem % values.len();
            rem /= values.len();
        }
        for ((name, values), &p) in axes.iter().zip(&picks) {
            raw.set(name, &values[p])?;
            coords.push((name.clone(), values[p].clone()));
        }
        if !sweeps_seed {
            let seed = base.seed.wrapping_add((index as u64).wrapping_mul(GRID_SEED_STRIDE));
            raw.set("seed", &seed.to_string())?;
        }
        raw.set(
            "output",
            &base.output.join(format!("point_{index:03}")).display().to_string(),
        )?;
        points.push(GridPoint {
            index,
            coords,
            config: raw.resolve()?,
        });
    }
    Ok(points)
}

/// Runs every grid point and writes `<output>/index.csv`.
pub fn grid(template: &RawConfig, axes: &[(String, Vec<String>)]) -> Result<Vec<(GridPoint, RunOutcome)>, CliError> {
    let points = expand_grid(template, axes)?;
    let out_dir = template.resolve()?.output;
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let mut results = Vec::with_capacity(points.len());
    for p in points {
        log::info!("grid point {} {:?}", p.index, p.coords);
        let outcome = run(&p.config)?;
        results.push((p, outcome));
    }
    let mut index = String::from("point");
    for (name, _) in axes {
        let _ = write!(index, ",{name}");
    }
    index.push_str(",seed,best_test_loss,best_test_accuracy,dir\n");
    for (p, o) in &results {
        let _ = write!(index, "{}", p.index);
        for (_, v) in &p.coords {
            let _ = write!(index, ",{v}");
        }
        let _ = writeln!(
            index,
            ",{},{},{},{}",
            p.config.seed,
            fmt_opt(o.best_test_loss),
            fmt_opt(o.best_test_accuracy),
            p.config.output.display()
        );
    }
    write_atomic(&out_dir.join("index.csv"), &index)?;
    Ok(results)
}
