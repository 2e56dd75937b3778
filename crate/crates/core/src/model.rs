//! Fully-connected networks: parameters, activations, losses, the forward
//! pass and exact backpropagation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::tensor::{
    self, add, hadamard, matmul, matvec, matvec_transposed, outer, DenseMatrix, DenseVector, Scalar, ShapeError,
};
use crate::{Error, Result};

/// Clamp applied to sigmoid outputs before the BCE log/division.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn deriv<T: Scalar>(self, z: T) -> T {
        self.deriv_from_output(self.eval(z))
    }

    /// Derivative expressed through the activation output `h = f(z)`.
    /// Gives the same bits as [`Activation::deriv`] because `h` is exactly
    /// what `eval` returns.
    #[inline]
    pub fn deriv_from_output<T: Scalar>(self, h: T) -> T {
        match self {
            Activation::Tanh => T::one() - h * h,
            Activation::Sigmoid => h * (T::one() - h),
            Activation::Identity => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::usage(format!("unknown activation {s:?}"))),
        }
    }
}

pub fn activation_eval<T: Scalar>(tag: Activation, z: &DenseVector<T>) -> DenseVector<T> {
    z.map(|v| tag.eval(v))
}

pub fn activation_deriv<T: Scalar>(tag: Activation, z: &DenseVector<T>) -> DenseVector<T> {
    z.map(|v| tag.deriv(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Bce,
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Mse => "mse",
        }
    }

    /// Per-sample loss on raw slices. Shapes are the caller's problem.
    pub fn eval_slice<T: Scalar>(self, y: &[T], target: &[T]) -> T {
        let c = T::from_usize(y.len()).unwrap();
        let mut acc = T::zero();
        match self {
            LossKind::Mse => {
                for (&p, &t) in y.iter().zip(target) {
                    let d = p - t;
                    acc = acc + d * d;
                }
                acc / c
            }
            LossKind::Bce => {
                let (lo, hi) = bce_bounds::<T>();
                for (&p, &t) in y.iter().zip(target) {
                    let p = clamp(p, lo, hi);
                    acc = acc + (t * p.ln() + (T::one() - t) * (T::one() - p).ln());
                }
                -acc / c
            }
        }
    }

    /// `∂L/∂y` on raw slices, written into `out`.
    pub fn gradient_into<T: Scalar>(self, y: &[T], target: &[T], out: &mut [T]) {
        let c = T::from_usize(y.len()).unwrap();
        match self {
            LossKind::Mse => {
                let two = T::cast(2.0);
                for ((o, &p), &t) in out.iter_mut().zip(y).zip(target) {
                    *o = two / c * (p - t);
                }
            }
            LossKind::Bce => {
                let (lo, hi) = bce_bounds::<T>();
                for ((o, &p), &t) in out.iter_mut().zip(y).zip(target) {
                    let p = clamp(p, lo, hi);
                    *o = (p - t) / (p * (T::one() - p)) / c;
                }
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossKind::Bce),
            "mse" => Ok(LossKind::Mse),
            _ => Err(Error::usage(format!("unknown loss {s:?}"))),
        }
    }
}

fn bce_bounds<T: Scalar>() -> (T, T) {
    let eps = T::cast(BCE_EPS);
    (eps, T::one() - eps)
}

fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

fn check_pair<T: Scalar>(op: &'static str, y: &DenseVector<T>, target: &DenseVector<T>) -> Result<(), ShapeError> {
    if y.len() != target.len() {
        return Err(ShapeError::new(op, (y.len(), 1), (target.len(), 1)));
    }
    Ok(())
}

/// Mean-over-outputs MSE or BCE (with clamped predictions).
pub fn loss_eval<T: Scalar>(kind: LossKind, y: &DenseVector<T>, target: &DenseVector<T>) -> Result<T> {
    check_pair("loss_eval", y, target)?;
    Ok(kind.eval_slice(y.as_slice(), target.as_slice()))
}

pub fn loss_gradient<T: Scalar>(kind: LossKind, y: &DenseVector<T>, target: &DenseVector<T>) -> Result<DenseVector<T>> {
    check_pair("loss_gradient", y, target)?;
    let mut out = DenseVector::zeros(y.len());
    kind.gradient_into(y.as_slice(), target.as_slice(), out.as_mut_slice());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: DenseMatrix<T>,
    pub biases: DenseVector<T>,
    pub activation: Activation,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weights: DenseMatrix<T>, biases: DenseVector<T>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.rows() {
            return Err(ShapeError::new("layer", weights.shape(), (biases.len(), 1)).into());
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    /// `(z, h)` for one input vector.
    pub fn forward(&self, input: &DenseVector<T>) -> Result<(DenseVector<T>, DenseVector<T>)> {
        let z = add(&matvec(&self.weights, input)?, &self.biases)?;
        let h = activation_eval(self.activation, &z);
        Ok((z, h))
    }

    /// `(z, h)` for a feature-major batch.
    pub fn forward_batch(&self, input: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let mut z = matmul(&self.weights, input)?;
        for r in 0..z.rows() {
            let b = self.biases.get(r);
            for v in z.row_mut(r) {
                *v = *v + b;
            }
        }
        let mut h = z.clone();
        for v in h.as_mut_slice() {
            *v = self.activation.eval(*v);
        }
        Ok((z, h))
    }

    pub fn checksum(&self, state: u64) -> u64 {
        let state = tensor::checksum(state, self.weights.as_slice());
        tensor::checksum(state, self.biases.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_width: usize,
    layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(input_width: usize, layers: Vec<LayerParams<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::usage("a network needs at least one layer"));
        }
        let mut prev = input_width;
        for layer in &layers {
            if layer.fan_in() != prev {
                return Err(ShapeError::new("network", layer.weights.shape(), (prev, 1)).into());
            }
            prev = layer.width();
        }
        Ok(Self { input_width, layers })
    }

    /// Random network over `widths = [n_0, n_1, …, n_K]`. Weights are drawn
    /// uniformly from `±1/√fan_in` (sampled in `f64`, then cast), biases start
    /// at zero. Hidden layers use `hidden`, the last layer `output`.
    pub fn init_uniform<R: Rng>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::usage(format!("invalid layer widths {widths:?}")));
        }
        let k = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::cast(rng.gen_range(-bound..=bound)))
                    .collect();
                LayerParams {
                    weights: DenseMatrix::from_vec(fan_out, fan_in, data).expect("sized above"),
                    biases: DenseVector::zeros(fan_out),
                    activation: if i + 1 == k { output } else { hidden },
                }
            })
            .collect();
        Self::new(widths[0], layers)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").width()
    }

    /// Number of weight layers `K`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[n_0, n_1, …, n_K]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width)
            .chain(self.layers.iter().map(LayerParams::width))
            .collect()
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerParams<T> {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut LayerParams<T> {
        &mut self.layers[i]
    }

    pub fn forward(&self, x: &DenseVector<T>) -> Result<ForwardTrace<T>> {
        forward(self, x)
    }

    pub fn predict(&self, x: &DenseVector<T>) -> Result<DenseVector<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.1;
        }
        Ok(h)
    }

    /// Outputs for a feature-major batch.
    pub fn predict_batch(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let mut h = self.layers[0].forward_batch(x)?.1;
        for layer in &self.layers[1..] {
            h = layer.forward_batch(&h)?.1;
        }
        Ok(h)
    }

    pub fn checksum(&self) -> u64 {
        self.layers.iter().fold(tensor::CHECKSUM_SEED, |s, l| l.checksum(s))
    }

    /// Checksum over every layer except the output layer.
    pub fn hidden_checksum(&self) -> u64 {
        self.layers[..self.layers.len() - 1]
            .iter()
            .fold(tensor::CHECKSUM_SEED, |s, l| l.checksum(s))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.biases.is_finite())
    }
}

/// Everything the forward pass computed for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub input: DenseVector<T>,
    /// `z_i`, one per layer.
    pub pre: Vec<DenseVector<T>>,
    /// `h_i = f(z_i)`, one per layer.
    pub post: Vec<DenseVector<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &DenseVector<T> {
        self.post.last().expect("trace has at least one layer")
    }

    /// Input to layer `i` (0-based), i.e. `h_{i}` in 1-based notation.
    pub fn layer_input(&self, i: usize) -> &DenseVector<T> {
        if i == 0 {
            &self.input
        } else {
            &self.post[i - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: DenseMatrix<T>,
    pub biases: DenseVector<T>,
}

impl<T: Scalar> LayerGrad<T> {
    pub fn zeros_like(layer: &LayerParams<T>) -> Self {
        Self {
            weights: DenseMatrix::zeros(layer.weights.rows(), layer.weights.cols()),
            biases: DenseVector::zeros(layer.biases.len()),
        }
    }

    /// `δW = δz·h_inᵀ`, `δb = δz`.
    pub fn from_delta(dz: &DenseVector<T>, input: &DenseVector<T>) -> Self {
        Self {
            weights: outer(dz, input),
            biases: dz.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.as_slice().iter().all(|v| v.is_zero()) && self.biases.as_slice().iter().all(|v| v.is_zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

pub fn forward<T: Scalar>(net: &Network<T>, x: &DenseVector<T>) -> Result<ForwardTrace<T>> {
    if x.len() != net.input_width {
        return Err(ShapeError::new("forward", (net.input_width, 1), (x.len(), 1)).into());
    }
    let mut pre = Vec::with_capacity(net.depth());
    let mut post = Vec::with_capacity(net.depth());
    for (i, layer) in net.layers.iter().enumerate() {
        let input = if i == 0 { x } else { &post[i - 1] };
        let (z, h) = layer.forward(input)?;
        pre.push(z);
        post.push(h);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        pre,
        post,
    })
}

/// Exact chain-rule gradients seeded with `δh_K = output_grad`.
///
/// Only the stored trace and the layer weights are read; nothing is
/// recomputed through the forward path.
pub fn backprop<T: Scalar>(
    net: &Network<T>,
    trace: &ForwardTrace<T>,
    output_grad: &DenseVector<T>,
) -> Result<Gradients<T>> {
    let k = net.depth();
    if trace.pre.len() != k || trace.post.len() != k {
        return Err(ShapeError::new("backprop", (k, 1), (trace.pre.len(), trace.post.len())).into());
    }
    let mut grads: Vec<Option<LayerGrad<T>>> = vec![None; k];
    let mut dh = output_grad.clone();
    for i in (0..k).rev() {
        let layer = &net.layers[i];
        if trace.pre[i].len() != layer.width() || trace.layer_input(i).len() != layer.fan_in() {
            return Err(ShapeError::new("backprop", layer.weights.shape(), (trace.pre[i].len(), 1)).into());
        }
        let fprime = trace.post[i].map(|h| layer.activation.deriv_from_output(h));
        let dz = hadamard(&dh, &fprime)?;
        if i > 0 {
            dh = matvec_transposed(&layer.weights, &dz)?;
        }
        grads[i] = Some(LayerGrad::from_delta(&dz, trace.layer_input(i)));
    }
    Ok(Gradients {
        layers: grads.into_iter().map(|g| g.expect("filled")).collect(),
    })
}
