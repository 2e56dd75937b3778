//! Closed-form FMA and memory accounting for one training sample.
//!
//! The model covers linear fully-connected layers without biases or
//! activations. Per layer `i` with `n_{i−1}` inputs and `n_i` outputs:
//!
//! - forward `h_i = W_i h_{i−1}`: `n_{i−1}·n_i`
//! - weight gradient `δz_i h_{i−1}ᵀ`: `n_{i−1}·n_i`
//! - update `W_i − η·δW_i`: `n_{i−1}·n_i`
//! - hidden feedback: `W_{i+1}ᵀ δz_{i+1}` for BP (`n_i·n_{i+1}`),
//!   `B_i e` for F³ (`C·n_i`)
//!
//! Everything is integer or exact-rational; floating point only appears in
//! the `*_f64` convenience accessors.

use num_rational::Ratio;
use num_traits::ToPrimitive;

use crate::{Error, Result};

/// Bytes per stored element.
pub const ELEMENT_BYTES: i64 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    /// `[n_0, n_1, …, n_K]` with `n_K = C`.
    pub widths: Vec<u64>,
    pub batch_size: u64,
    /// Training-set size `S`.
    pub samples: u64,
}

impl ArchSpec {
    pub fn new(widths: Vec<u64>, batch_size: u64, samples: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::usage(format!(
                "need at least two non-zero widths, got {widths:?}"
            )));
        }
        Ok(Self {
            widths,
            batch_size,
            samples,
        })
    }

    /// `K` hidden layers of width `w` between `n_0` inputs and `C` outputs
    /// means `K+1` weight layers; here `layers` is the weight-layer count `K`.
    pub fn equal_width(
        layers: usize,
        input: u64,
        width: u64,
        classes: u64,
        batch_size: u64,
        samples: u64,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::usage("need at least one layer"));
        }
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(width, layers - 1));
        widths.push(classes);
        Self::new(widths, batch_size, samples)
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn classes(&self) -> u64 {
        *self.widths.last().expect("validated")
    }

    /// `Σ_{i=1..K−1} n_i`.
    pub fn hidden_units(&self) -> u64 {
        self.widths[1..self.widths.len() - 1].iter().sum()
    }

    /// `Σ_{i=1..K} n_{i−1}·n_i`.
    pub fn weights(&self) -> u64 {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub fma_forward: u64,
    pub fma_weight_grad: u64,
    pub fma_update: u64,
    /// Propagation of `δh` to the hidden layers under backpropagation.
    pub fma_backward_bp: u64,
    /// The same under F³ (`B_i e` products).
    pub fma_backward_f3: u64,
    pub total_bp: u64,
    pub total_f3: u64,
    pub savings_delta_relative: Ratio<i64>,
    pub savings_total_relative: Ratio<i64>,
    /// Transient hidden-layer errors BP keeps for a batch.
    pub mem_bp_bytes: i64,
    /// F³ feedback matrices plus one stored error vector per sample.
    pub mem_f3_bytes: i64,
    pub mem_saved_bytes: i64,
    /// Feedback matrices stored at 2 bits per trinomial element, rounded up.
    pub mem_feedback_trinomial_bytes: u64,
}

impl CostReport {
    pub fn savings_delta_f64(&self) -> f64 {
        ratio_f64(self.savings_delta_relative)
    }

    pub fn savings_total_f64(&self) -> f64 {
        ratio_f64(self.savings_total_relative)
    }

    /// `key=value` lines in a fixed order.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("fma_forward", self.fma_forward.to_string()),
            ("fma_weight_grad", self.fma_weight_grad.to_string()),
            ("fma_update", self.fma_update.to_string()),
            ("fma_backward_bp", self.fma_backward_bp.to_string()),
            ("fma_backward_f3", self.fma_backward_f3.to_string()),
            ("total_bp", self.total_bp.to_string()),
            ("total_f3", self.total_f3.to_string()),
            ("savings_delta_relative", format!("{:.4}", self.savings_delta_f64())),
            ("savings_total_relative", format!("{:.4}", self.savings_total_f64())),
            ("mem_bp_bytes", self.mem_bp_bytes.to_string()),
            ("mem_f3_bytes", self.mem_f3_bytes.to_string()),
            ("mem_saved_bytes", self.mem_saved_bytes.to_string()),
            (
                "mem_feedback_trinomial_bytes",
                self.mem_feedback_trinomial_bytes.to_string(),
            ),
        ]
    }
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn i64_of(v: u64) -> i64 {
    i64::try_from(v).expect("count fits in i64")
}

/// Relative saving `(a − b)/a`, zero when `a` is zero.
fn saving(a: u64, b: u64) -> Ratio<i64> {
    if a == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(i64_of(a) - i64_of(b), i64_of(a))
    }
}

/// FMA and memory figures for `arch`.
pub fn fma_totals(arch: &ArchSpec) -> CostReport {
    let s = arch.weights();
    let c = arch.classes();
    let bp_delta: u64 = arch.widths[1..].windows(2).map(|w| w[0] * w[1]).sum();
    let f3_delta = c * arch.hidden_units();
    let total_bp = 3 * s + bp_delta;
    let total_f3 = 3 * s + f3_delta;
    let (mem_bp_bytes, mem_f3_bytes, mem_saved_bytes, mem_feedback_trinomial_bytes) = memory_model(arch);
    CostReport {
        fma_forward: s,
        fma_weight_grad: s,
        fma_update: s,
        fma_backward_bp: bp_delta,
        fma_backward_f3: f3_delta,
        total_bp,
        total_f3,
        savings_delta_relative: saving(bp_delta, f3_delta),
        savings_total_relative: saving(total_bp, total_f3),
        mem_bp_bytes,
        mem_f3_bytes,
        mem_saved_bytes,
        mem_feedback_trinomial_bytes,
    }
}

/// `(bp, f3, saved, trinomial feedback)` bytes.
///
/// BP holds `b·Σn_i` hidden errors during a batch; F³ instead holds its
/// `C·Σn_i` feedback weights and `C` delayed error values per sample.
pub fn memory_model(arch: &ArchSpec) -> (i64, i64, i64, u64) {
    let hidden = i64_of(arch.hidden_units());
    let c = i64_of(arch.classes());
    let b = i64_of(arch.batch_size);
    let s = i64_of(arch.samples);
    let bp = ELEMENT_BYTES * b * hidden;
    let f3 = ELEMENT_BYTES * c * (hidden + s);
    let trinomial = (arch.classes() * arch.hidden_units()).div_ceil(4);
    (bp, f3, bp - f3, trinomial)
}

/// Exact `(δ-savings, total savings)` for `K` weight layers whose hidden
/// layers all have width `w`:
///
/// - `δ = (w − C) / (w + C/(K−2))`
/// - `total = (K−2)(w − C) / (4C + 4Kw + 3n_0 − 8w)`
///
/// The forms assume at least one hidden-to-hidden link, so `K ≥ 3`.
pub fn savings_equal_width(k: u64, n0: u64, w: u64, c: u64) -> Result<(Ratio<i64>, Ratio<i64>)> {
    if k < 3 {
        return Err(Error::usage(format!(
            "equal-width savings need at least 3 layers (got {k}); use fma_totals for shallow networks"
        )));
    }
    if w == 0 || c == 0 || n0 == 0 {
        return Err(Error::usage("widths must be non-zero"));
    }
    let (k, n0, w, c) = (i64_of(k), i64_of(n0), i64_of(w), i64_of(c));
    let num = (k - 2) * (w - c);
    let delta = Ratio::new(num, (k - 2) * w + c);
    let total = Ratio::new(num, 4 * c + 4 * k * w + 3 * n0 - 8 * w);
    Ok((delta, total))
}
