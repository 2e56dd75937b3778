//! Dataset loaders, standardization and seeded batching.
//!
//! Every sample keeps its canonical index (its position in the file order
//! of its split) for as long as it lives; shuffling only reorders batches.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::LossKind;
use crate::tensor::{DenseMatrix, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn loss(self) -> LossKind {
        match self {
            Task::Classification => LossKind::Bce,
            Task::Regression => LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Fixed-width features and targets stored row-major, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    width: usize,
    targets: Vec<T>,
    classes: usize,
    task: Task,
    split: Split,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        width: usize,
        targets: Vec<T>,
        classes: usize,
        task: Task,
        split: Split,
    ) -> Result<Self> {
        if width == 0 || classes == 0 {
            return Err(Error::usage("dataset needs non-zero feature and target widths"));
        }
        if !features.len().is_multiple_of(width) || !targets.len().is_multiple_of(classes) {
            return Err(Error::usage("dataset buffers are not a whole number of rows"));
        }
        if features.len() / width != targets.len() / classes {
            return Err(Error::usage(format!(
                "{} feature rows but {} target rows",
                features.len() / width,
                targets.len() / classes
            )));
        }
        Ok(Self {
            features,
            width,
            targets,
            classes,
            task,
            split,
        })
    }

    /// Classification dataset from class labels.
    pub fn from_labels(features: Vec<T>, width: usize, labels: &[u8], classes: usize, split: Split) -> Result<Self> {
        let mut targets = vec![T::zero(); labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            if usize::from(l) >= classes {
                return Err(Error::usage(format!("label {l} out of range for {classes} classes")));
            }
            targets[i * classes + usize::from(l)] = T::one();
        }
        Self::new(features, width, targets, classes, Task::Classification, split)
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn loss(&self) -> LossKind {
        self.task.loss()
    }

    pub fn feature(&self, i: usize) -> &[T] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn target(&self, i: usize) -> &[T] {
        &self.targets[i * self.classes..(i + 1) * self.classes]
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    /// Class label of sample `i` (argmax of the one-hot target).
    pub fn label(&self, i: usize) -> Option<usize> {
        crate::tensor::argmax(self.target(i))
    }

    /// The first `n` samples in canonical order (all of them if `n` is larger).
    pub fn subset(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            features: self.features[..n * self.width].to_vec(),
            width: self.width,
            targets: self.targets[..n * self.classes].to_vec(),
            classes: self.classes,
            task: self.task,
            split: self.split,
        }
    }

    /// Features of `indices` as a feature-major `width × b` batch.
    pub fn gather_features(&self, indices: &[usize]) -> DenseMatrix<T> {
        let b = indices.len();
        let mut out = DenseMatrix::zeros(self.width, b);
        let data = out.as_mut_slice();
        for (s, &i) in indices.iter().enumerate() {
            for (c, &v) in self.feature(i).iter().enumerate() {
                data[c * b + s] = v;
            }
        }
        out
    }

    /// Features of `indices` as a sample-major `b × width` matrix.
    pub fn gather_features_rows(&self, indices: &[usize]) -> DenseMatrix<T> {
        let mut data = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            data.extend_from_slice(self.feature(i));
        }
        DenseMatrix::from_vec(indices.len(), self.width, data).expect("sized above")
    }

    /// Targets of `indices` as a feature-major `classes × b` batch.
    pub fn gather_targets(&self, indices: &[usize]) -> DenseMatrix<T> {
        let b = indices.len();
        let mut out = DenseMatrix::zeros(self.classes, b);
        let data = out.as_mut_slice();
        for (s, &i) in indices.iter().enumerate() {
            for (c, &v) in self.target(i).iter().enumerate() {
                data[c * b + s] = v;
            }
        }
        out
    }

    fn map_features(&mut self, f: impl Fn(usize, T) -> T) {
        let w = self.width;
        for (k, v) in self.features.iter_mut().enumerate() {
            *v = f(k % w, *v);
        }
    }
}

/// Per-feature mean and standard deviation fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Mean and standard deviation of a scalar regression target.
    pub target: Option<(f64, f64)>,
}

impl Standardizer {
    /// Population statistics of `train`'s features, and of its targets when
    /// `with_target` is set (single-output regression only). Zero standard
    /// deviations are replaced by 1.
    pub fn fit<T: Scalar>(train: &Dataset<T>, with_target: bool) -> Result<Self> {
        let n = train.len();
        if n == 0 {
            return Err(Error::usage("cannot fit a standardizer on an empty split"));
        }
        let w = train.width;
        let mut mean = vec![0.0; w];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(train.feature(i)) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; w];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(train.feature(i)).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        let std = var.into_iter().map(|s| positive_std(s / n as f64)).collect();
        let target = if with_target {
            if train.classes != 1 {
                return Err(Error::usage("target standardization needs a single target column"));
            }
            let t: Vec<f64> = train.targets.iter().map(|v| v.as_f64()).collect();
            let m = t.iter().sum::<f64>() / n as f64;
            let var = t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            Some((m, positive_std(var)))
        } else {
            None
        };
        Ok(Self { mean, std, target })
    }

    /// One mean and standard deviation pooled over every feature value of
    /// `train`, repeated for each column. Keeps relative pixel intensities,
    /// unlike [`Standardizer::fit`], which rescales near-constant border
    /// pixels to unit variance.
    pub fn fit_pooled<T: Scalar>(train: &Dataset<T>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::usage("cannot fit a standardizer on an empty split"));
        }
        let count = train.features.len() as f64;
        let mean = train.features.iter().map(|v| v.as_f64()).sum::<f64>() / count;
        let var = train.features.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / count;
        let w = train.width;
        Ok(Self {
            mean: vec![mean; w],
            std: vec![positive_std(var); w],
            target: None,
        })
    }

    pub fn apply<T: Scalar>(&self, ds: &mut Dataset<T>) -> Result<()> {
        if ds.width != self.mean.len() {
            return Err(Error::usage(format!(
                "standardizer fitted on width {} applied to width {}",
                self.mean.len(),
                ds.width
            )));
        }
        ds.map_features(|c, v| T::cast((v.as_f64() - self.mean[c]) / self.std[c]));
        if let Some((m, s)) = self.target {
            for v in &mut ds.targets {
                *v = T::cast((v.as_f64() - m) / s);
            }
        }
        Ok(())
    }
}

fn positive_std(var: f64) -> f64 {
    let s = var.sqrt();
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Fits on `train`, then standardizes both splits with the train statistics.
pub fn standardize_pair<T: Scalar>(
    train: &mut Dataset<T>,
    test: &mut Dataset<T>,
    with_target: bool,
) -> Result<Standardizer> {
    let st = Standardizer::fit(train, with_target)?;
    st.apply(train)?;
    st.apply(test)?;
    Ok(st)
}

/// How image features are standardized after scaling pixels to [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Scaling {
    /// Each pixel position gets its own train mean and deviation.
    #[default]
    PerFeature,
    /// One mean and deviation over all train pixels.
    Pooled,
}

impl Scaling {
    pub fn name(self) -> &'static str {
        match self {
            Scaling::PerFeature => "per_feature",
            Scaling::Pooled => "pooled",
        }
    }
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_feature" => Ok(Scaling::PerFeature),
            "pooled" => Ok(Scaling::Pooled),
            _ => Err(Error::usage(format!("unknown scaling {s:?} (per_feature|pooled)"))),
        }
    }
}

fn standardize_images<T: Scalar>(train: &mut Dataset<T>, test: &mut Dataset<T>, scaling: Scaling) -> Result<()> {
    let st = match scaling {
        Scaling::PerFeature => Standardizer::fit(train, false)?,
        Scaling::Pooled => Standardizer::fit_pooled(train)?,
    };
    st.apply(train)?;
    st.apply(test)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw IDX image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let (n, rows, cols) = (
        be_u32(&bytes, 4) as usize,
        be_u32(&bytes, 8) as usize,
        be_u32(&bytes, 12) as usize,
    );
    let need = n * rows * cols;
    if bytes.len() - 16 < need {
        return Err(Error::format(
            path,
            format!(
                "truncated: {} pixel bytes for {n} images of {rows}x{cols}",
                bytes.len() - 16
            ),
        ));
    }
    Ok((n, rows, cols, bytes[16..16 + need].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(&bytes, 4) as usize;
    if bytes.len() - 8 < n {
        return Err(Error::format(
            path,
            format!("truncated: {} label bytes for {n} labels", bytes.len() - 8),
        ));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// One MNIST split with pixels scaled to [0, 1] (not yet standardized).
pub fn load_mnist<T: Scalar>(images: &Path, labels: &Path, split: Split) -> Result<Dataset<T>> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let labels_raw = read_idx_labels(labels)?;
    if labels_raw.len() != n {
        return Err(Error::format(
            labels,
            format!("{} labels for {n} images", labels_raw.len()),
        ));
    }
    if let Some(bad) = labels_raw.iter().find(|&&l| l > 9) {
        return Err(Error::format(labels, format!("label {bad} outside 0..=9")));
    }
    let features = pixels.iter().map(|&p| T::cast(f64::from(p) / 255.0)).collect();
    Dataset::from_labels(features, rows * cols, &labels_raw, 10, split)
}

/// Standard train/test MNIST files from `dir`, standardized per feature with
/// train statistics.
pub fn load_mnist_dir<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    load_mnist_dir_scaled(dir, Scaling::PerFeature)
}

pub fn load_mnist_dir_scaled<T: Scalar>(dir: &Path, scaling: Scaling) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut train = load_mnist(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let mut test = load_mnist(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    standardize_images(&mut train, &mut test, scaling)?;
    Ok((train, test))
}

pub const CIFAR_RECORD: usize = 1 + 3072;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecord {
    pub label: u8,
    /// 1024 red, then 1024 green, then 1024 blue bytes, each row-major 32×32.
    pub pixels: Vec<u8>,
}

impl CifarRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CIFAR_RECORD);
        out.push(self.label);
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn parse_cifar_records(path: &Path, bytes: &[u8]) -> Result<Vec<CifarRecord>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::format(
            path,
            format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        ));
    }
    bytes
        .chunks_exact(CIFAR_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] > 9 {
                return Err(Error::format(path, format!("record {i}: label byte {} > 9", rec[0])));
            }
            Ok(CifarRecord {
                label: rec[0],
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

/// Concatenates CIFAR-10 binary batches into one split, pixels scaled to
/// [0, 1].
pub fn load_cifar10<T: Scalar>(paths: &[PathBuf], split: Split) -> Result<Dataset<T>> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = read_file(path)?;
        for rec in parse_cifar_records(path, &bytes)? {
            labels.push(rec.label);
            features.extend(rec.pixels.iter().map(|&p| T::cast(f64::from(p) / 255.0)));
        }
    }
    Dataset::from_labels(features, 3072, &labels, 10, split)
}

/// `data_batch_1..5.bin` and `test_batch.bin` from `dir` (or its
/// `cifar-10-batches-bin` subdirectory), standardized per feature with train
/// statistics.
pub fn load_cifar10_dir<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    load_cifar10_dir_scaled(dir, Scaling::PerFeature)
}

pub fn load_cifar10_dir_scaled<T: Scalar>(dir: &Path, scaling: Scaling) -> Result<(Dataset<T>, Dataset<T>)> {
    let nested = dir.join("cifar-10-batches-bin");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let train_paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let mut train = load_cifar10(&train_paths, Split::Train)?;
    let mut test = load_cifar10(&[dir.join("test_batch.bin")], Split::Test)?;
    standardize_images(&mut train, &mut test, scaling)?;
    Ok((train, test))
}

pub const CENSUS_COLUMNS: usize = 15;
/// Column positions of the numeric Census Income attributes.
pub const CENSUS_NUMERIC: [usize; 6] = [0, 2, 4, 10, 11, 12];
/// Column positions of the categorical Census Income attributes.
pub const CENSUS_CATEGORICAL: [usize; 8] = [1, 3, 5, 6, 7, 8, 9, 13];

#[derive(Debug, Clone, PartialEq)]
pub struct CensusRow {
    pub numeric: [f64; 6],
    pub categorical: [String; 8],
    pub high_income: bool,
}

/// Parses an Adult-format file. Blank lines and `|` comment lines are
/// ignored; malformed rows are skipped and counted. `?` is kept as an
/// ordinary category value.
pub fn parse_census(path: &Path) -> Result<(Vec<CensusRow>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        match parse_census_line(line) {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed rows", path.display());
    }
    Ok((rows, skipped))
}

fn parse_census_line(line: &str) -> Option<CensusRow> {
    let cells: Vec<&str> = line.split(',').map(str::trim).collect();
    if cells.len() != CENSUS_COLUMNS {
        return None;
    }
    let mut numeric = [0.0; 6];
    for (slot, &col) in numeric.iter_mut().zip(&CENSUS_NUMERIC) {
        *slot = cells[col].parse().ok()?;
    }
    let categorical = CENSUS_CATEGORICAL.map(|col| cells[col].to_string());
    let high_income = match cells[14].trim_end_matches('.') {
        ">50K" => true,
        "<=50K" => false,
        _ => return None,
    };
    Some(CensusRow {
        numeric,
        categorical,
        high_income,
    })
}

/// Category vocabularies built on the training rows, sorted per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusEncoder {
    pub vocab: Vec<Vec<String>>,
}

impl CensusEncoder {
    pub fn fit(rows: &[CensusRow]) -> Self {
        let vocab = (0..CENSUS_CATEGORICAL.len())
            .map(|j| {
                rows.iter()
                    .map(|r| r.categorical[j].clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        Self { vocab }
    }

    /// Numeric columns plus one indicator per vocabulary entry.
    pub fn width(&self) -> usize {
        CENSUS_NUMERIC.len() + self.vocab.iter().map(Vec::len).sum::<usize>()
    }

    /// Target `[1, 0]` for `<=50K`, `[0, 1]` for `>50K`. Categories unseen
    /// in training encode as all zeros.
    pub fn encode<T: Scalar>(&self, rows: &[CensusRow], split: Split) -> Result<Dataset<T>> {
        let width = self.width();
        let mut features = Vec::with_capacity(rows.len() * width);
        let mut labels = Vec::with_capacity(rows.len());
        for row in rows {
            features.extend(row.numeric.iter().map(|&v| T::cast(v)));
            for (value, vocab) in row.categorical.iter().zip(&self.vocab) {
                let hit = vocab.binary_search(value).ok();
                features.extend((0..vocab.len()).map(|k| if Some(k) == hit { T::one() } else { T::zero() }));
            }
            labels.push(u8::from(row.high_income));
        }
        Dataset::from_labels(features, width, &labels, 2, split)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusLoad<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub encoder: CensusEncoder,
    pub skipped_rows: usize,
}

/// Train/test Census Income. Numeric columns are standardized with train
/// statistics; one-hot columns are left as 0/1.
pub fn load_census<T: Scalar>(train_path: &Path, test_path: &Path) -> Result<CensusLoad<T>> {
    let (train_rows, skipped_train) = parse_census(train_path)?;
    let (test_rows, skipped_test) = parse_census(test_path)?;
    let encoder = CensusEncoder::fit(&train_rows);
    let mut train = encoder.encode(&train_rows, Split::Train)?;
    let mut test = encoder.encode(&test_rows, Split::Test)?;
    let mut st = Standardizer::fit(&train, false)?;
    for c in CENSUS_NUMERIC.len()..st.mean.len() {
        st.mean[c] = 0.0;
        st.std[c] = 1.0;
    }
    st.apply(&mut train)?;
    st.apply(&mut test)?;
    Ok(CensusLoad {
        train,
        test,
        encoder,
        skipped_rows: skipped_train + skipped_test,
    })
}

pub const SGEMM_PARAMS: usize = 14;
pub const SGEMM_RUNS: usize = 4;

/// Raw SGEMM rows: 14 kernel parameters and the mean of the 4 run times.
pub fn parse_sgemm(path: &Path) -> Result<(Vec<[f64; SGEMM_PARAMS]>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut params = Vec::new();
    let mut runtimes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != SGEMM_PARAMS + SGEMM_RUNS {
            return Err(Error::format(
                path,
                format!("row {}: expected 18 columns, found {}", lineno + 1, cells.len()),
            ));
        }
        let mut values = [0.0; SGEMM_PARAMS + SGEMM_RUNS];
        for (slot, cell) in values.iter_mut().zip(&cells) {
            *slot = cell
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: non-numeric cell {cell:?}", lineno + 1)))?;
        }
        params.push(values[..SGEMM_PARAMS].try_into().expect("14 values"));
        runtimes.push(values[SGEMM_PARAMS..].iter().sum::<f64>() / SGEMM_RUNS as f64);
    }
    Ok((params, runtimes))
}

/// Seeded 80/20 split of the SGEMM table, features and target standardized
/// with train statistics. The target is the mean of the four run times.
pub fn load_sgemm<T: Scalar>(path: &Path, split_seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (params, runtimes) = parse_sgemm(path)?;
    let n = params.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_train = n * 4 / 5;
    let build = |idx: &[usize], split| {
        let features = idx
            .iter()
            .flat_map(|&i| params[i].iter().map(|&v| T::cast(v)))
            .collect();
        let targets = idx.iter().map(|&i| T::cast(runtimes[i])).collect();
        Dataset::new(features, SGEMM_PARAMS, targets, 1, Task::Regression, split)
    };
    let mut train = build(&order[..n_train], Split::Train)?;
    let mut test = build(&order[n_train..], Split::Test)?;
    standardize_pair(&mut train, &mut test, true)?;
    Ok((train, test))
}

/// A batch of canonical sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `(sample_index, features, target)` in batch order.
    pub fn iter<'a, T: Scalar>(&'a self, ds: &'a Dataset<T>) -> impl Iterator<Item = (usize, &'a [T], &'a [T])> + 'a {
        self.indices.iter().map(move |&i| (i, ds.feature(i), ds.target(i)))
    }
}

/// Seeded permutation of the canonical indices cut into consecutive batches;
/// the last batch may be short.
pub fn make_batches<T: Scalar>(ds: &Dataset<T>, batch_size: usize, epoch_seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(order
        .chunks(batch_size)
        .map(|c| Batch { indices: c.to_vec() })
        .collect())
}
