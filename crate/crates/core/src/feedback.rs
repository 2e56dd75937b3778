//! Fixed random feedback weights, error-information variants and the
//! per-sample delayed error store.
//!
//! A [`FeedbackBank`] holds one `n_i × C` matrix per hidden layer. The hidden
//! feedback `δh_i` is the product of that matrix with a `C`-dimensional error
//! signal, so no forward weight ever enters the feedback path.

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{loss_gradient, LossKind};
use crate::tensor::{self, DenseMatrix, DenseVector, Scalar, ShapeError};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedbackInit {
    /// Kaiming-He uniform, gain √2, fan-in mode with fan-in `C`.
    Kaiming,
    /// Uniform over {−1, 0, 1}.
    Trinomial,
    /// Uniform over {0, 1}.
    Binomial,
    /// Identity blocks repeated along the longer side with alternating sign.
    PmIdentity,
}

impl FeedbackInit {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackInit::Kaiming => "kaiming",
            FeedbackInit::Trinomial => "trinomial",
            FeedbackInit::Binomial => "binomial",
            FeedbackInit::PmIdentity => "pm_identity",
        }
    }

    fn tag(self) -> u8 {
        match self {
            FeedbackInit::Kaiming => 0,
            FeedbackInit::Trinomial => 1,
            FeedbackInit::Binomial => 2,
            FeedbackInit::PmIdentity => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => FeedbackInit::Kaiming,
            1 => FeedbackInit::Trinomial,
            2 => FeedbackInit::Binomial,
            3 => FeedbackInit::PmIdentity,
            _ => return None,
        })
    }
}

impl fmt::Display for FeedbackInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeedbackInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kaiming" => Ok(FeedbackInit::Kaiming),
            "trinomial" => Ok(FeedbackInit::Trinomial),
            "binomial" => Ok(FeedbackInit::Binomial),
            "pm_identity" | "pmi" => Ok(FeedbackInit::PmIdentity),
            _ => Err(Error::usage(format!("unknown feedback init {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackBank<T> {
    mats: Vec<DenseMatrix<T>>,
    scheme: FeedbackInit,
    seed: u64,
}

/// Draws one `n_i × classes` matrix per entry of `hidden_widths`.
pub fn init_feedback<T: Scalar>(
    hidden_widths: &[usize],
    classes: usize,
    scheme: FeedbackInit,
    seed: u64,
) -> Result<FeedbackBank<T>> {
    if hidden_widths.is_empty() || hidden_widths.contains(&0) {
        return Err(Error::usage(format!(
            "feedback bank needs hidden widths, got {hidden_widths:?}"
        )));
    }
    if classes == 0 {
        return Err(Error::usage("feedback bank needs at least one output"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = hidden_widths
        .iter()
        .map(|&n| {
            let data: Vec<T> = match scheme {
                FeedbackInit::Kaiming => {
                    let bound = 2f64.sqrt() * (3.0 / classes as f64).sqrt();
                    (0..n * classes)
                        .map(|_| T::cast(rng.gen_range(-bound..=bound)))
                        .collect()
                }
                FeedbackInit::Trinomial => (0..n * classes)
                    .map(|_| T::cast(f64::from(rng.gen_range(0..3u8)) - 1.0))
                    .collect(),
                FeedbackInit::Binomial => (0..n * classes)
                    .map(|_| T::cast(f64::from(rng.gen_range(0..2u8))))
                    .collect(),
                FeedbackInit::PmIdentity => return pm_identity(n, classes),
            };
            DenseMatrix::from_vec(n, classes, data).expect("sized above")
        })
        .collect();
    Ok(FeedbackBank { mats, scheme, seed })
}

fn pm_identity<T: Scalar>(rows: usize, cols: usize) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(rows, cols);
    let block = rows.min(cols);
    let sign = |b: usize| if b.is_multiple_of(2) { T::one() } else { -T::one() };
    if rows >= cols {
        for r in 0..rows {
            m.set(r, r % block, sign(r / block));
        }
    } else {
        for c in 0..cols {
            m.set(c % block, c, sign(c / block));
        }
    }
    m
}

const AUDIT_MAGIC: &[u8; 4] = b"F3FB";
const AUDIT_VERSION: u32 = 1;

impl<T: Scalar> FeedbackBank<T> {
    pub fn from_matrices(mats: Vec<DenseMatrix<T>>, scheme: FeedbackInit, seed: u64) -> Self {
        Self { mats, scheme, seed }
    }

    pub fn matrices(&self) -> &[DenseMatrix<T>] {
        &self.mats
    }

    /// Feedback matrix for hidden layer `i` (0-based over hidden layers).
    pub fn matrix(&self, i: usize) -> &DenseMatrix<T> {
        &self.mats[i]
    }

    pub fn scheme(&self) -> FeedbackInit {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn checksum(&self) -> u64 {
        self.mats
            .iter()
            .fold(tensor::CHECKSUM_SEED, |s, m| tensor::checksum(s, m.as_slice()))
    }

    /// Checks the bank against a network's widths `[n_0, …, n_K]`.
    pub fn check_against(&self, widths: &[usize]) -> Result<()> {
        let k = widths.len() - 1;
        let classes = widths[k];
        if self.mats.len() != k - 1 {
            return Err(Error::usage(format!(
                "feedback bank has {} matrices for {} hidden layers",
                self.mats.len(),
                k - 1
            )));
        }
        for (i, m) in self.mats.iter().enumerate() {
            if m.shape() != (widths[i + 1], classes) {
                return Err(ShapeError::new("feedback", m.shape(), (widths[i + 1], classes)).into());
            }
        }
        Ok(())
    }

    /// Writes the audit dump: magic, version, scheme tag, seed, matrix count,
    /// every shape, then each matrix row-major as little-endian `f32`.
    pub fn write_audit<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(AUDIT_MAGIC)?;
        w.write_all(&AUDIT_VERSION.to_le_bytes())?;
        w.write_all(&[self.scheme.tag()])?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.mats.len() as u32).to_le_bytes())?;
        for m in &self.mats {
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
        }
        for m in &self.mats {
            for v in m.as_slice() {
                w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

impl FeedbackBank<f32> {
    pub fn read_audit<R: Read>(mut r: R) -> io::Result<Self> {
        fn bad(msg: &str) -> io::Error {
            io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != AUDIT_MAGIC {
            return Err(bad("not a feedback audit dump"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != AUDIT_VERSION {
            return Err(bad("unsupported audit version"));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let scheme = FeedbackInit::from_tag(tag[0]).ok_or_else(|| bad("unknown scheme tag"))?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut u32buf)?;
            let rows = u32::from_le_bytes(u32buf) as usize;
            r.read_exact(&mut u32buf)?;
            let cols = u32::from_le_bytes(u32buf) as usize;
            shapes.push((rows, cols));
        }
        let mut mats = Vec::with_capacity(count);
        for (rows, cols) in shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut u32buf)?;
                data.push(f32::from_le_bytes(u32buf));
            }
            mats.push(DenseMatrix::from_vec(rows, cols, data).expect("sized above"));
        }
        Ok(Self { mats, scheme, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorSignal {
    /// `∂L/∂y`.
    LossGradient,
    /// `y − y*`.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorTransform {
    Raw,
    /// Keep only the target-class component.
    OneHot,
    /// Softmax the output before computing the signal.
    Softmax,
    /// One scalar for the whole training set: the previous epoch's mean
    /// `‖e‖₁/C`, multiplied into each sample's target.
    Aggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorMode {
    pub signal: ErrorSignal,
    pub transform: ErrorTransform,
}

impl ErrorMode {
    pub const LOSS: ErrorMode = ErrorMode {
        signal: ErrorSignal::LossGradient,
        transform: ErrorTransform::Raw,
    };

    pub fn new(signal: ErrorSignal, transform: ErrorTransform) -> Self {
        Self { signal, transform }
    }

    pub fn is_classification_only(self) -> bool {
        matches!(self.transform, ErrorTransform::OneHot | ErrorTransform::Softmax)
    }

    /// Slice form of [`compute_error_info`]; `out` must have length `C`.
    pub fn compute_into<T: Scalar>(self, y: &[T], target: &[T], loss: LossKind, out: &mut [T]) -> Result<()> {
        if y.len() != target.len() || out.len() != y.len() {
            return Err(ShapeError::new("error_info", (y.len(), 1), (target.len(), 1)).into());
        }
        let soft;
        let y = if self.transform == ErrorTransform::Softmax {
            soft = softmax(y);
            &soft[..]
        } else {
            y
        };
        match self.signal {
            ErrorSignal::LossGradient => loss.gradient_into(y, target, out),
            ErrorSignal::Error => {
                for ((o, &p), &t) in out.iter_mut().zip(y).zip(target) {
                    *o = p - t;
                }
            }
        }
        if self.transform == ErrorTransform::OneHot {
            let c = one_hot_index(target)
                .ok_or_else(|| Error::usage("one-hot error information requires a one-hot target"))?;
            for (i, o) in out.iter_mut().enumerate() {
                if i != c {
                    *o = T::zero();
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ErrorSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorSignal::LossGradient => "loss_gradient",
            ErrorSignal::Error => "error",
        })
    }
}

impl FromStr for ErrorSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss_gradient" | "loss" => Ok(ErrorSignal::LossGradient),
            "error" => Ok(ErrorSignal::Error),
            _ => Err(Error::usage(format!("unknown error signal {s:?}"))),
        }
    }
}

impl fmt::Display for ErrorTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorTransform::Raw => "raw",
            ErrorTransform::OneHot => "one_hot",
            ErrorTransform::Softmax => "softmax",
            ErrorTransform::Aggregated => "aggregated",
        })
    }
}

impl FromStr for ErrorTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ErrorTransform::Raw),
            "one_hot" => Ok(ErrorTransform::OneHot),
            "softmax" => Ok(ErrorTransform::Softmax),
            "aggregated" => Ok(ErrorTransform::Aggregated),
            _ => Err(Error::usage(format!("unknown error transform {s:?}"))),
        }
    }
}

pub(crate) fn softmax<T: Scalar>(y: &[T]) -> Vec<T> {
    let max = y.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = y.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = T::zero();
    for &e in &exps {
        sum = sum + e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the single `1` in an otherwise-zero vector.
pub fn one_hot_index<T: Scalar>(target: &[T]) -> Option<usize> {
    let mut hot = None;
    for (i, &t) in target.iter().enumerate() {
        if t == T::one() {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if t != T::zero() {
            return None;
        }
    }
    hot
}

/// The error information a sample leaves behind for the next epoch.
pub fn compute_error_info<T: Scalar>(
    mode: ErrorMode,
    y: &DenseVector<T>,
    target: &DenseVector<T>,
    loss: LossKind,
) -> Result<DenseVector<T>> {
    if mode == ErrorMode::LOSS {
        return loss_gradient(loss, y, target);
    }
    let mut out = DenseVector::zeros(y.len());
    mode.compute_into(y.as_slice(), target.as_slice(), loss, out.as_mut_slice())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreEvent<T> {
    Fetch {
        epoch_tag: u64,
        index: usize,
        value: Vec<T>,
    },
    Store {
        epoch_tag: u64,
        index: usize,
        value: Vec<T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Aggregate {
    scale: f64,
    sum: f64,
    count: usize,
}

/// Per-sample delayed error information, keyed by canonical sample index.
///
/// Each sample is fetched before it is stored within an epoch, so one buffer
/// suffices: what `fetch_delayed` returns during epoch `t` is what the
/// previous epoch wrote. In aggregated mode only a scalar survives the epoch
/// and the fetched feedback is that scalar times the sample's target.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStore<T> {
    classes: usize,
    entries: Vec<T>,
    present: Vec<bool>,
    aggregate: Option<Aggregate>,
    epoch_tag: u64,
    log: Option<Vec<StoreEvent<T>>>,
}

impl<T: Scalar> ErrorStore<T> {
    /// An empty store for `samples` samples of width `classes`. Fetching
    /// before any write is a usage error.
    pub fn new(samples: usize, classes: usize, aggregated: bool) -> Self {
        Self {
            classes,
            entries: vec![T::zero(); samples * classes],
            present: vec![false; samples],
            aggregate: aggregated.then_some(Aggregate {
                scale: 1.0,
                sum: 0.0,
                count: 0,
            }),
            epoch_tag: 0,
            log: None,
        }
    }

    /// `e_0 = y*` for every sample. `targets` is row-major `samples × classes`.
    pub fn init_from_targets(&mut self, targets: &[T]) -> Result<()> {
        self.init_entries(targets)?;
        if let Some(agg) = self.aggregate.as_mut() {
            agg.scale = 1.0;
        }
        Ok(())
    }

    /// Initializes from signals produced by an inference-only pass. In
    /// aggregated mode the scale is their mean `‖e‖₁/C` and the entries keep
    /// the targets the scale multiplies.
    pub fn init_from_signals(&mut self, targets: &[T], signals: &[T]) -> Result<()> {
        if signals.len() != targets.len() {
            return Err(ShapeError::new("init_store", (targets.len(), 1), (signals.len(), 1)).into());
        }
        if self.aggregate.is_some() {
            self.init_entries(targets)?;
            let n = self.present.len();
            let scale = if n == 0 {
                1.0
            } else {
                signals.chunks_exact(self.classes).map(|e| l1_mean(e)).sum::<f64>() / n as f64
            };
            self.aggregate.as_mut().expect("checked").scale = scale;
        } else {
            self.init_entries(signals)?;
        }
        Ok(())
    }

    fn init_entries(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(ShapeError::new("init_store", (self.present.len(), self.classes), (values.len(), 1)).into());
        }
        self.entries.copy_from_slice(values);
        self.present.iter_mut().for_each(|p| *p = true);
        if let Some(agg) = self.aggregate.as_mut() {
            agg.sum = 0.0;
            agg.count = 0;
        }
        self.epoch_tag = 0;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of completed epochs whose errors the store holds.
    pub fn epoch_tag(&self) -> u64 {
        self.epoch_tag
    }

    pub fn is_aggregated(&self) -> bool {
        self.aggregate.is_some()
    }

    /// Aggregated-mode scale currently applied to targets.
    pub fn aggregate_scale(&self) -> Option<f64> {
        self.aggregate.as_ref().map(|a| a.scale)
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn take_log(&mut self) -> Vec<StoreEvent<T>> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn store_error(&mut self, index: usize, e: &DenseVector<T>) -> Result<()> {
        self.store_slice(index, e.as_slice())
    }

    pub fn store_slice(&mut self, index: usize, e: &[T]) -> Result<()> {
        if e.len() != self.classes {
            return Err(ShapeError::new("store_error", (self.classes, 1), (e.len(), 1)).into());
        }
        if index >= self.present.len() {
            return Err(Error::usage(format!(
                "sample index {index} outside store of {}",
                self.present.len()
            )));
        }
        if let Some(log) = self.log.as_mut() {
            log.push(StoreEvent::Store {
                epoch_tag: self.epoch_tag,
                index,
                value: e.to_vec(),
            });
        }
        match self.aggregate.as_mut() {
            Some(agg) => {
                agg.sum += l1_mean(e);
                agg.count += 1;
            }
            None => {
                self.entries[index * self.classes..(index + 1) * self.classes].copy_from_slice(e);
                self.present[index] = true;
            }
        }
        Ok(())
    }

    pub fn fetch_delayed(&mut self, index: usize) -> Result<DenseVector<T>> {
        let mut out = DenseVector::zeros(self.classes);
        self.fetch_into(index, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn fetch_into(&mut self, index: usize, out: &mut [T]) -> Result<()> {
        if index >= self.present.len() || !self.present[index] {
            return Err(Error::usage(format!(
                "no delayed error for sample {index}; initialize the store first"
            )));
        }
        let src = &self.entries[index * self.classes..(index + 1) * self.classes];
        match &self.aggregate {
            Some(agg) => {
                let s = T::cast(agg.scale);
                for (o, &t) in out.iter_mut().zip(src) {
                    *o = s * t;
                }
            }
            None => out.copy_from_slice(src),
        }
        if let Some(log) = self.log.as_mut() {
            log.push(StoreEvent::Fetch {
                epoch_tag: self.epoch_tag,
                index,
                value: out.to_vec(),
            });
        }
        Ok(())
    }

    /// Epoch boundary. In aggregated mode the scale for the next epoch
    /// becomes the mean over this epoch's writes (unchanged if none).
    pub fn advance_epoch(&mut self) {
        if let Some(agg) = self.aggregate.as_mut() {
            if agg.count > 0 {
                agg.scale = agg.sum / agg.count as f64;
            }
            agg.sum = 0.0;
            agg.count = 0;
        }
        self.epoch_tag += 1;
    }
}

fn l1_mean<T: Scalar>(e: &[T]) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    e.iter().map(|v| v.as_f64().abs()).sum::<f64>() / e.len() as f64
}
