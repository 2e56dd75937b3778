//! Training algorithms, optimizers and the epoch loop.
//!
//! All five algorithms share one update rule, `θ ← optimizer(θ, δθ)`, and
//! differ only in the vector `δh_i` each layer's gradient is built from:
//!
//! | algorithm | hidden `δh_i`             | output `δh_K`   |
//! |-----------|---------------------------|-----------------|
//! | F³        | `B_i·e_{t−1}` (stored)    | `∂L/∂h_K`       |
//! | DFA       | `B_i·∂L/∂h_K` (current)   | `∂L/∂h_K`       |
//! | DRTP      | `−B_i·y*`                 | `∂L/∂h_K`       |
//! | LLO       | none (frozen)             | `∂L/∂h_K`       |
//! | BP        | `W_{i+1}ᵀ δz_{i+1}`       | `∂L/∂h_K`       |
//!
//! The per-sample functions follow the textbook order literally and use
//! the per-vector kernels. [`train_batch`] is the production path: for each
//! layer it runs the batch forward, then applies the batch-averaged update.
//! Because every layer's update only reads activations produced before it,
//! a batch of one reproduces the per-sample functions bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::data::{make_batches, Batch, Dataset};
use crate::feedback::{ErrorMode, ErrorStore, ErrorTransform, FeedbackBank};
use crate::model::{backprop, loss_gradient, LayerGrad, LayerParams, LossKind, Network};
use crate::tensor::{
    self, argmax, hadamard, matmul, matmul_transposed, matvec, outer_sum, DenseMatrix, DenseVector, Scalar, ShapeError,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Bp,
    Dfa,
    Drtp,
    Llo,
    F3(ErrorMode),
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Dfa => "dfa",
            Algorithm::Drtp => "drtp",
            Algorithm::Llo => "llo",
            Algorithm::F3(_) => "f3",
        }
    }

    /// BP and LLO use their own learning-rate defaults; the rest are the
    /// feedback-driven algorithms.
    pub fn is_bio_plausible(self) -> bool {
        matches!(self, Algorithm::Dfa | Algorithm::Drtp | Algorithm::F3(_))
    }

    pub fn needs_feedback(self) -> bool {
        self.is_bio_plausible()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::F3(mode) => write!(f, "f3({},{})", mode.signal, mode.transform),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::usage(format!("unknown optimizer {s:?}"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

fn check_grad<T: Scalar>(params: &LayerParams<T>, grads: &LayerGrad<T>) -> Result<()> {
    if params.weights.shape() != grads.weights.shape() || params.biases.len() != grads.biases.len() {
        return Err(ShapeError::new("update", params.weights.shape(), grads.weights.shape()).into());
    }
    Ok(())
}

/// `W ← W − η·δW`, `b ← b − η·δb`.
pub fn sgd_update<T: Scalar>(params: &mut LayerParams<T>, grads: &LayerGrad<T>, lr: T) -> Result<()> {
    check_grad(params, grads)?;
    tensor::probe::count_fma(grads.weights.as_slice().len());
    for (w, &g) in params.weights.as_mut_slice().iter_mut().zip(grads.weights.as_slice()) {
        *w = *w - lr * g;
    }
    for (b, &g) in params.biases.as_mut_slice().iter_mut().zip(grads.biases.as_slice()) {
        *b = *b - lr * g;
    }
    Ok(())
}

/// First and second moments for one layer, plus its step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m_w: DenseMatrix<T>,
    pub v_w: DenseMatrix<T>,
    pub m_b: DenseVector<T>,
    pub v_b: DenseVector<T>,
    pub step: u64,
    pub lr: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(layer: &LayerParams<T>, lr: T) -> Self {
        let (r, c) = layer.weights.shape();
        Self {
            m_w: DenseMatrix::zeros(r, c),
            v_w: DenseMatrix::zeros(r, c),
            m_b: DenseVector::zeros(r),
            v_b: DenseVector::zeros(r),
            step: 0,
            lr,
        }
    }
}

/// One bias-corrected Adam step.
pub fn adam_update<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut LayerParams<T>,
    grads: &LayerGrad<T>,
) -> Result<()> {
    check_grad(params, grads)?;
    if state.m_w.shape() != params.weights.shape() || state.m_b.len() != params.biases.len() {
        return Err(ShapeError::new("adam_update", state.m_w.shape(), params.weights.shape()).into());
    }
    state.step += 1;
    tensor::probe::count_fma(grads.weights.as_slice().len());
    let b1 = T::cast(ADAM_BETA1);
    let b2 = T::cast(ADAM_BETA2);
    let eps = T::cast(ADAM_EPS);
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let lr = state.lr;
    let step = |theta: &mut [T], m: &mut [T], v: &mut [T], g: &[T]| {
        for (((p, m), v), &g) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    step(
        params.weights.as_mut_slice(),
        state.m_w.as_mut_slice(),
        state.v_w.as_mut_slice(),
        grads.weights.as_slice(),
    );
    step(
        params.biases.as_mut_slice(),
        state.m_b.as_mut_slice(),
        state.v_b.as_mut_slice(),
        grads.biases.as_slice(),
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<T> {
    Sgd { lr: T, steps: Vec<u64> },
    Adam(Vec<AdamState<T>>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, net: &Network<T>) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::usage(format!("learning rate must be positive, got {lr}")));
        }
        let lr = T::cast(lr);
        Ok(match kind {
            OptimizerKind::Sgd => Optimizer::Sgd {
                lr,
                steps: vec![0; net.depth()],
            },
            OptimizerKind::Adam => Optimizer::Adam(net.layers().iter().map(|l| AdamState::zeros_like(l, lr)).collect()),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Sgd { .. } => OptimizerKind::Sgd,
            Optimizer::Adam(_) => OptimizerKind::Adam,
        }
    }

    /// Number of updates applied to layer `i`.
    pub fn steps(&self, i: usize) -> u64 {
        match self {
            Optimizer::Sgd { steps, .. } => steps[i],
            Optimizer::Adam(states) => states[i].step,
        }
    }

    pub fn step_layer(&mut self, i: usize, layer: &mut LayerParams<T>, grads: &LayerGrad<T>) -> Result<()> {
        match self {
            Optimizer::Sgd { lr, steps } => {
                sgd_update(layer, grads, *lr)?;
                steps[i] += 1;
                Ok(())
            }
            Optimizer::Adam(states) => adam_update(&mut states[i], layer, grads),
        }
    }
}

/// Everything one training run mutates.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub network: Network<T>,
    pub feedback: Option<FeedbackBank<T>>,
    pub store: Option<ErrorStore<T>>,
    pub optimizer: Optimizer<T>,
    pub algorithm: Algorithm,
    pub loss: LossKind,
    epoch: u64,
}

impl<T: Scalar> TrainState<T> {
    /// Feedback-driven algorithms need a bank matching the hidden layers
    /// (none when the network has no hidden layer).
    pub fn new(
        network: Network<T>,
        algorithm: Algorithm,
        loss: LossKind,
        optimizer: Optimizer<T>,
        feedback: Option<FeedbackBank<T>>,
    ) -> Result<Self> {
        if algorithm.needs_feedback() && network.depth() > 1 {
            match &feedback {
                Some(bank) => bank.check_against(&network.widths())?,
                None => {
                    return Err(Error::usage(format!(
                        "{} needs a feedback bank for {} hidden layers",
                        algorithm.name(),
                        network.depth() - 1
                    )))
                }
            }
        }
        Ok(Self {
            network,
            feedback,
            store: None,
            optimizer,
            algorithm,
            loss,
            epoch: 0,
        })
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Prepares the delayed error store for an F³ run: `e_0 = y*`, or with
    /// `inference` the error information of the untrained network.
    pub fn init_store(&mut self, train: &Dataset<T>, inference: bool) -> Result<()> {
        let Algorithm::F3(mode) = self.algorithm else {
            return Err(Error::usage(format!(
                "{} does not use an error store",
                self.algorithm.name()
            )));
        };
        let c = self.network.output_width();
        if train.classes() != c {
            return Err(ShapeError::new("init_store", (c, 1), (train.classes(), 1)).into());
        }
        let mut store = ErrorStore::new(train.len(), c, mode.transform == ErrorTransform::Aggregated);
        if inference {
            let signals = error_signals(&self.network, train, mode, self.loss)?;
            store.init_from_signals(train.targets(), &signals)?;
        } else {
            store.init_from_targets(train.targets())?;
        }
        self.store = Some(store);
        Ok(())
    }

    fn hidden_feedback(&self, i: usize) -> Result<&DenseMatrix<T>> {
        self.feedback
            .as_ref()
            .map(|b| b.matrix(i))
            .ok_or_else(|| Error::usage("no feedback bank"))
    }

    fn store_mut(&mut self) -> Result<&mut ErrorStore<T>> {
        self.store
            .as_mut()
            .ok_or_else(|| Error::usage("error store not initialized; call init_store before training"))
    }

    fn apply(&mut self, i: usize, grad: &LayerGrad<T>) -> Result<()> {
        self.optimizer.step_layer(i, self.network.layer_mut(i), grad)
    }
}

/// Per-sample error information of the current network over a whole split,
/// row-major `samples × C`.
fn error_signals<T: Scalar>(net: &Network<T>, ds: &Dataset<T>, mode: ErrorMode, loss: LossKind) -> Result<Vec<T>> {
    let c = ds.classes();
    let mut out = vec![T::zero(); ds.len() * c];
    let mut y = vec![T::zero(); c];
    for (start, chunk) in chunks(ds.len()) {
        let idx: Vec<usize> = (start..start + chunk).collect();
        let pred = net.predict_batch(&ds.gather_features(&idx))?;
        for (s, &i) in idx.iter().enumerate() {
            column_into(&pred, s, &mut y);
            mode.compute_into(&y, ds.target(i), loss, &mut out[i * c..(i + 1) * c])?;
        }
    }
    Ok(out)
}

const EVAL_CHUNK: usize = 1000;

fn chunks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).step_by(EVAL_CHUNK).map(move |s| (s, EVAL_CHUNK.min(n - s)))
}

fn column_into<T: Scalar>(m: &DenseMatrix<T>, s: usize, out: &mut [T]) {
    let b = m.cols();
    for (r, o) in out.iter_mut().enumerate() {
        *o = m.as_slice()[r * b + s];
    }
}

fn set_column<T: Scalar>(m: &mut DenseMatrix<T>, s: usize, v: &[T]) {
    let b = m.cols();
    let data = m.as_mut_slice();
    for (r, &x) in v.iter().enumerate() {
        data[r * b + s] = x;
    }
}

fn hidden_delta<T: Scalar>(
    layer: &LayerParams<T>,
    dh: &DenseVector<T>,
    h: &DenseVector<T>,
    input: &DenseVector<T>,
) -> Result<LayerGrad<T>> {
    let fprime = h.map(|v| layer.activation.deriv_from_output(v));
    let dz = hadamard(dh, &fprime)?;
    Ok(LayerGrad::from_delta(&dz, input))
}

/// Where the hidden layers of a direct-feedback algorithm get `δh_i` from.
enum Direct<'a, T> {
    /// F³: this vector, fetched before the pass.
    Stored(DenseVector<T>),
    /// DRTP: `−B_i·y*`.
    Target(&'a DenseVector<T>),
    /// LLO: hidden layers are not trained.
    Frozen,
}

/// Shared per-sample path for F³, DRTP and LLO: each layer is updated as
/// soon as its forward output exists.
fn direct_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
    src: Direct<'_, T>,
) -> Result<DenseVector<T>> {
    let k = state.network.depth();
    let mut h = x.clone();
    for i in 0..k {
        let (_, out) = state.network.layer(i).forward(&h)?;
        let grad = if i + 1 == k {
            let dh = loss_gradient(state.loss, &out, target)?;
            Some(hidden_delta(state.network.layer(i), &dh, &out, &h)?)
        } else {
            let dh = match &src {
                Direct::Stored(e) => Some(matvec(state.hidden_feedback(i)?, e)?),
                Direct::Target(t) => Some(matvec(state.hidden_feedback(i)?, t)?.map(|v| -v)),
                Direct::Frozen => None,
            };
            match dh {
                Some(dh) => Some(hidden_delta(state.network.layer(i), &dh, &out, &h)?),
                None => None,
            }
        };
        if let Some(g) = grad {
            state.apply(i, &g)?;
        }
        h = out;
    }
    Ok(h)
}

/// One F³ step on one sample: hidden layers learn from the error this
/// sample left in the previous epoch, and the sample's new error
/// information replaces it. Returns the sample's loss.
pub fn f3_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
    sample_index: usize,
) -> Result<T> {
    let Algorithm::F3(mode) = state.algorithm else {
        return Err(Error::usage("f3_sample_update on a non-F³ state"));
    };
    let e_prev = state.store_mut()?.fetch_delayed(sample_index)?;
    let y = direct_sample_update(state, x, target, Direct::Stored(e_prev))?;
    let mut e = DenseVector::zeros(y.len());
    mode.compute_into(y.as_slice(), target.as_slice(), state.loss, e.as_mut_slice())?;
    state.store_mut()?.store_error(sample_index, &e)?;
    Ok(state.loss.eval_slice(y.as_slice(), target.as_slice()))
}

/// DRTP: hidden layers receive `−B_i·y*`.
pub fn drtp_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
) -> Result<T> {
    let y = direct_sample_update(state, x, target, Direct::Target(target))?;
    Ok(state.loss.eval_slice(y.as_slice(), target.as_slice()))
}

/// Last layer only; hidden layers keep their initialization.
pub fn llo_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
) -> Result<T> {
    let y = direct_sample_update(state, x, target, Direct::Frozen)?;
    Ok(state.loss.eval_slice(y.as_slice(), target.as_slice()))
}

/// DFA: full forward pass, then every hidden layer learns from the current
/// loss gradient through its feedback matrix.
pub fn dfa_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
) -> Result<T> {
    let trace = state.network.forward(x)?;
    let k = state.network.depth();
    let e = loss_gradient(state.loss, trace.output(), target)?;
    let mut grads = Vec::with_capacity(k);
    for i in 0..k {
        let dh = if i + 1 == k {
            e.clone()
        } else {
            matvec(state.hidden_feedback(i)?, &e)?
        };
        grads.push(hidden_delta(
            state.network.layer(i),
            &dh,
            &trace.post[i],
            trace.layer_input(i),
        )?);
    }
    for (i, g) in grads.iter().enumerate() {
        state.apply(i, g)?;
    }
    Ok(state.loss.eval_slice(trace.output().as_slice(), target.as_slice()))
}

/// Backpropagation: forward, exact gradients, then every layer updated.
pub fn bp_sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
) -> Result<T> {
    let trace = state.network.forward(x)?;
    let dy = loss_gradient(state.loss, trace.output(), target)?;
    let grads = backprop(&state.network, &trace, &dy)?;
    for (i, g) in grads.layers.iter().enumerate() {
        state.apply(i, g)?;
    }
    Ok(state.loss.eval_slice(trace.output().as_slice(), target.as_slice()))
}

/// Dispatches to the per-sample function of the state's algorithm.
pub fn sample_update<T: Scalar>(
    state: &mut TrainState<T>,
    x: &DenseVector<T>,
    target: &DenseVector<T>,
    sample_index: usize,
) -> Result<T> {
    match state.algorithm {
        Algorithm::Bp => bp_sample_update(state, x, target),
        Algorithm::Dfa => dfa_sample_update(state, x, target),
        Algorithm::Drtp => drtp_sample_update(state, x, target),
        Algorithm::Llo => llo_sample_update(state, x, target),
        Algorithm::F3(_) => f3_sample_update(state, x, target, sample_index),
    }
}

/// Batch-averaged gradient of one layer: `δz = δh ⊙ f′(h)`, then
/// `δW = Σ_s δz_s h_{in,s}ᵀ / b` and `δb = Σ_s δz_s / b`.
fn batch_grad<T: Scalar>(
    layer: &LayerParams<T>,
    dh: &DenseMatrix<T>,
    h: &DenseMatrix<T>,
    input: &DenseMatrix<T>,
) -> Result<(LayerGrad<T>, DenseMatrix<T>)> {
    let mut dz = dh.clone();
    for (d, &v) in dz.as_mut_slice().iter_mut().zip(h.as_slice()) {
        *d = *d * layer.activation.deriv_from_output(v);
    }
    let b = dz.cols();
    let mut weights = outer_sum(&dz, &input.transpose())?;
    let mut biases = DenseVector::zeros(dz.rows());
    for (r, out) in biases.as_mut_slice().iter_mut().enumerate() {
        let row = dz.row(r);
        let mut acc = row[0];
        for &v in &row[1..] {
            acc = acc + v;
        }
        *out = acc;
    }
    if b > 1 {
        let inv = T::from_usize(b).expect("batch size fits");
        weights.as_mut_slice().iter_mut().for_each(|v| *v = *v / inv);
        biases.as_mut_slice().iter_mut().for_each(|v| *v = *v / inv);
    }
    Ok((LayerGrad { weights, biases }, dz))
}

/// Loss gradient for every column of a feature-major output batch.
fn loss_gradient_batch<T: Scalar>(loss: LossKind, y: &DenseMatrix<T>, targets: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (c, b) = y.shape();
    let mut out = DenseMatrix::zeros(c, b);
    let (mut ys, mut ts, mut gs) = (vec![T::zero(); c], vec![T::zero(); c], vec![T::zero(); c]);
    for s in 0..b {
        column_into(y, s, &mut ys);
        column_into(targets, s, &mut ts);
        loss.gradient_into(&ys, &ts, &mut gs);
        set_column(&mut out, s, &gs);
    }
    out
}

/// Sum over the batch of per-sample losses, accumulated in `f64`.
fn batch_loss_sum<T: Scalar>(loss: LossKind, y: &DenseMatrix<T>, targets: &DenseMatrix<T>) -> f64 {
    let (c, b) = y.shape();
    let (mut ys, mut ts) = (vec![T::zero(); c], vec![T::zero(); c]);
    let mut acc = 0.0;
    for s in 0..b {
        column_into(y, s, &mut ys);
        column_into(targets, s, &mut ts);
        acc += loss.eval_slice(&ys, &ts).as_f64();
    }
    acc
}

/// Trains on one batch and returns the summed per-sample loss of the
/// training forward pass.
pub fn train_batch<T: Scalar>(state: &mut TrainState<T>, ds: &Dataset<T>, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let x = ds.gather_features(&batch.indices);
    let targets = ds.gather_targets(&batch.indices);
    let k = state.network.depth();
    if targets.rows() != state.network.output_width() {
        return Err(ShapeError::new("train_batch", (state.network.output_width(), 1), targets.shape()).into());
    }
    match state.algorithm {
        Algorithm::Bp | Algorithm::Dfa => {
            let mut acts = Vec::with_capacity(k);
            for i in 0..k {
                let input = if i == 0 { &x } else { &acts[i - 1] };
                let h = state.network.layer(i).forward_batch(input)?.1;
                acts.push(h);
            }
            let y = &acts[k - 1];
            let dy = loss_gradient_batch(state.loss, y, &targets);
            let loss = batch_loss_sum(state.loss, y, &targets);
            let mut grads: Vec<Option<LayerGrad<T>>> = vec![None; k];
            if state.algorithm == Algorithm::Bp {
                let mut dh = dy;
                for i in (0..k).rev() {
                    let input = if i == 0 { &x } else { &acts[i - 1] };
                    let (g, dz) = batch_grad(state.network.layer(i), &dh, &acts[i], input)?;
                    if i > 0 {
                        dh = matmul_transposed(&state.network.layer(i).weights, &dz)?;
                    }
                    grads[i] = Some(g);
                }
            } else {
                for i in 0..k {
                    let input = if i == 0 { &x } else { &acts[i - 1] };
                    let dh = if i + 1 == k {
                        dy.clone()
                    } else {
                        matmul(state.hidden_feedback(i)?, &dy)?
                    };
                    grads[i] = Some(batch_grad(state.network.layer(i), &dh, &acts[i], input)?.0);
                }
            }
            for (i, g) in grads.into_iter().enumerate() {
                state.apply(i, &g.expect("filled"))?;
            }
            Ok(loss)
        }
        Algorithm::F3(_) | Algorithm::Drtp | Algorithm::Llo => {
            let c = targets.rows();
            let b = batch.len();
            let feedback = match state.algorithm {
                Algorithm::F3(_) => {
                    let mut e = DenseMatrix::zeros(c, b);
                    let mut col = vec![T::zero(); c];
                    let store = state.store_mut()?;
                    for (s, &i) in batch.indices.iter().enumerate() {
                        store.fetch_into(i, &mut col)?;
                        set_column(&mut e, s, &col);
                    }
                    Some(e)
                }
                Algorithm::Drtp => {
                    let mut neg = targets.clone();
                    neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                    Some(neg)
                }
                _ => None,
            };
            let mut h = x;
            for i in 0..k {
                let out = state.network.layer(i).forward_batch(&h)?.1;
                let dh = if i + 1 == k {
                    Some(loss_gradient_batch(state.loss, &out, &targets))
                } else {
                    match &feedback {
                        Some(e) => Some(matmul(state.hidden_feedback(i)?, e)?),
                        None => None,
                    }
                };
                if let Some(dh) = dh {
                    let (g, _) = batch_grad(state.network.layer(i), &dh, &out, &h)?;
                    state.apply(i, &g)?;
                }
                h = out;
            }
            let loss = batch_loss_sum(state.loss, &h, &targets);
            if let Algorithm::F3(mode) = state.algorithm {
                let loss_kind = state.loss;
                let store = state.store_mut()?;
                let (mut ys, mut e) = (vec![T::zero(); c], vec![T::zero(); c]);
                for (s, &i) in batch.indices.iter().enumerate() {
                    column_into(&h, s, &mut ys);
                    mode.compute_into(&ys, ds.target(i), loss_kind, &mut e)?;
                    store.store_slice(i, &e)?;
                }
            }
            Ok(loss)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Mean per-sample loss of the training forward passes.
    pub train_loss: f64,
    pub samples: usize,
    pub batches: usize,
}

/// One pass over `train` in the batch order given by `shuffle_seed`.
pub fn run_epoch<T: Scalar>(
    state: &mut TrainState<T>,
    train: &Dataset<T>,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<EpochMetrics> {
    let batches = make_batches(train, batch_size, shuffle_seed)?;
    run_batches(state, train, &batches)
}

/// Epoch over an explicit batch list (the store still advances once).
pub fn run_batches<T: Scalar>(
    state: &mut TrainState<T>,
    train: &Dataset<T>,
    batches: &[Batch],
) -> Result<EpochMetrics> {
    if matches!(state.algorithm, Algorithm::F3(_)) && state.store.is_none() {
        return Err(Error::usage(
            "error store not initialized; call init_store before training",
        ));
    }
    let mut total = 0.0;
    let mut samples = 0;
    for batch in batches {
        total += train_batch(state, train, batch)?;
        samples += batch.len();
    }
    if !state.network.is_finite() {
        return Err(Error::NonFinite(format!(
            "network parameters after epoch {}",
            state.epoch + 1
        )));
    }
    if let Some(store) = state.store.as_mut() {
        store.advance_epoch();
    }
    state.epoch += 1;
    Ok(EpochMetrics {
        train_loss: if samples == 0 { 0.0 } else { total / samples as f64 },
        samples,
        batches: batches.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Fraction of argmax hits; `None` for regression.
    pub accuracy: Option<f64>,
}

/// Mean loss (and accuracy for classification) with updates disabled.
pub fn evaluate<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Evaluation> {
    let loss = ds.loss();
    let classify = ds.task() == crate::data::Task::Classification;
    let c = ds.classes();
    let mut total = 0.0;
    let mut hits = 0usize;
    let mut y = vec![T::zero(); c];
    for (start, chunk) in chunks(ds.len()) {
        let idx: Vec<usize> = (start..start + chunk).collect();
        let pred = net.predict_batch(&ds.gather_features(&idx))?;
        for (s, &i) in idx.iter().enumerate() {
            column_into(&pred, s, &mut y);
            total += loss.eval_slice(&y, ds.target(i)).as_f64();
            if classify && argmax(&y) == ds.label(i) {
                hits += 1;
            }
        }
    }
    let n = ds.len().max(1) as f64;
    if !total.is_finite() {
        return Err(Error::NonFinite("evaluation loss".into()));
    }
    Ok(Evaluation {
        loss: total / n,
        accuracy: classify.then(|| hits as f64 / n),
    })
}
