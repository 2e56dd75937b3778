//! Dense row-major containers and the kernels used by every other module.
//!
//! All reductions accumulate in the element's own precision, starting from
//! zero and walking the summed index in ascending order. The batched kernels
//! (`matmul`, `matmul_transposed`, `outer_sum`) keep that per-element order,
//! so a batch of one produces the same bits as the per-vector kernels.
//!
//! Batches are stored feature-major: a batch of `b` vectors of length `n` is
//! an `n × b` matrix whose column `s` is sample `s`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type. Training runs use `f32`, gradient checks `f64`.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    const NAME: &'static str;

    fn bits(self) -> u64;

    fn cast(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("every f64 converts to a float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn bits(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn bits(self) -> u64 {
        self.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
pub struct ShapeError {
    pub op: &'static str,
    pub lhs: (usize, usize),
    pub rhs: (usize, usize),
}

impl ShapeError {
    pub fn new(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Self { op, lhs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<T> {
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::new("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Column `c` copied out. For a feature-major batch this is sample `c`.
    pub fn column(&self, c: usize) -> DenseVector<T> {
        DenseVector::from_vec((0..self.rows).map(|r| self.get(r, c)).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Address of the backing buffer; stable for the lifetime of the matrix
    /// since the buffer never grows. Used by the probe to identify operands.
    pub fn buffer_id(&self) -> usize {
        self.data.as_ptr() as usize
    }
}

impl<T: Scalar> DenseVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn from_slice(data: &[T]) -> Self {
        Self { data: data.to_vec() }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self {
            data: values.iter().map(|&v| T::cast(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize) -> T {
        self.data[i]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.data)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// FNV-1a over the bit patterns of `values`, chained from `state`.
/// Start a fresh chain with [`CHECKSUM_SEED`].
pub fn checksum<T: Scalar>(state: u64, values: &[T]) -> u64 {
    let mut h = state;
    for v in values {
        for byte in v.bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub const CHECKSUM_SEED: u64 = 0xcbf2_9ce4_8422_2325;

/// `A·x`.
pub fn matvec<T: Scalar>(a: &DenseMatrix<T>, x: &DenseVector<T>) -> Result<DenseVector<T>, ShapeError> {
    if a.cols != x.len() {
        return Err(ShapeError::new("matvec", a.shape(), (x.len(), 1)));
    }
    probe::count_fma(a.rows * a.cols);
    let mut out = Vec::with_capacity(a.rows);
    if a.cols == 0 {
        out.resize(a.rows, T::zero());
    } else {
        for row in a.data.chunks_exact(a.cols) {
            let mut acc = T::zero();
            for (&w, &v) in row.iter().zip(&x.data) {
                acc = acc + w * v;
            }
            out.push(acc);
        }
    }
    Ok(DenseVector { data: out })
}

/// `Aᵀ·x` without materializing the transpose.
pub fn matvec_transposed<T: Scalar>(a: &DenseMatrix<T>, x: &DenseVector<T>) -> Result<DenseVector<T>, ShapeError> {
    if a.rows != x.len() {
        return Err(ShapeError::new("matvec_transposed", a.shape(), (x.len(), 1)));
    }
    probe::count_fma(a.rows * a.cols);
    probe::note_transposed(a.buffer_id());
    let mut out = vec![T::zero(); a.cols];
    for (r, &xr) in x.data.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(a.row(r)) {
            *o = *o + w * xr;
        }
    }
    Ok(DenseVector { data: out })
}

/// `u·vᵀ`.
pub fn outer<T: Scalar>(u: &DenseVector<T>, v: &DenseVector<T>) -> DenseMatrix<T> {
    probe::count_fma(u.len() * v.len());
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &ur in &u.data {
        data.extend(v.data.iter().map(|&vc| ur * vc));
    }
    DenseMatrix {
        rows: u.len(),
        cols: v.len(),
        data,
    }
}

pub fn hadamard<T: Scalar>(u: &DenseVector<T>, v: &DenseVector<T>) -> Result<DenseVector<T>, ShapeError> {
    if u.len() != v.len() {
        return Err(ShapeError::new("hadamard", (u.len(), 1), (v.len(), 1)));
    }
    Ok(DenseVector {
        data: u.data.iter().zip(&v.data).map(|(&a, &b)| a * b).collect(),
    })
}

pub fn add<T: Scalar>(u: &DenseVector<T>, v: &DenseVector<T>) -> Result<DenseVector<T>, ShapeError> {
    if u.len() != v.len() {
        return Err(ShapeError::new("add", (u.len(), 1), (v.len(), 1)));
    }
    Ok(DenseVector {
        data: u.data.iter().zip(&v.data).map(|(&a, &b)| a + b).collect(),
    })
}

/// Output rows per register tile.
const TILE_ROWS: usize = 4;
/// Output columns per register tile.
const TILE_COLS: usize = 16;

/// `A·H` for a feature-major batch `H` (n × b). Each output entry is the
/// same ascending-index sum `matvec` computes for that sample; the tiling
/// only changes which entries are in flight together.
pub fn matmul<T: Scalar>(a: &DenseMatrix<T>, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>, ShapeError> {
    if a.cols != h.rows {
        return Err(ShapeError::new("matmul", a.shape(), h.shape()));
    }
    let (m, k, b) = (a.rows, a.cols, h.cols);
    probe::count_fma(m * k * b);
    let mut out = DenseMatrix::zeros(m, b);
    if b == 0 || k == 0 {
        return Ok(out);
    }
    let mut r = 0;
    while r + TILE_ROWS <= m {
        let mut s0 = 0;
        while s0 + TILE_COLS <= b {
            matmul_tile::<T, TILE_COLS>(a, h, r, s0, &mut out);
            s0 += TILE_COLS;
        }
        while s0 + 4 <= b {
            matmul_tile::<T, 4>(a, h, r, s0, &mut out);
            s0 += 4;
        }
        for i in r..r + TILE_ROWS {
            matmul_row_tail(a.row(i), h, s0, &mut out.data[i * b..(i + 1) * b]);
        }
        r += TILE_ROWS;
    }
    while r < m {
        matmul_row_tail(a.row(r), h, 0, &mut out.data[r * b..(r + 1) * b]);
        r += 1;
    }
    Ok(out)
}

/// Rows `r..r+TILE_ROWS`, columns `s0..s0+W` of `A·H`, accumulated in
/// registers over ascending `c`.
#[inline(never)]
fn matmul_tile<T: Scalar, const W: usize>(
    a: &DenseMatrix<T>,
    h: &DenseMatrix<T>,
    r: usize,
    s0: usize,
    out: &mut DenseMatrix<T>,
) {
    let (k, b) = (a.cols, h.cols);
    let mut acc = [[T::zero(); W]; TILE_ROWS];
    for c in 0..k {
        let hv: &[T; W] = h.data[c * b + s0..c * b + s0 + W].try_into().expect("tile");
        for (i, row) in acc.iter_mut().enumerate() {
            let w = a.data[(r + i) * k + c];
            for (o, &v) in row.iter_mut().zip(hv) {
                *o = *o + w * v;
            }
        }
    }
    for (i, row) in acc.iter().enumerate() {
        out.data[(r + i) * b + s0..(r + i) * b + s0 + W].copy_from_slice(row);
    }
}

/// Columns `from..b` of one output row, same summation order as the tiles.
fn matmul_row_tail<T: Scalar>(w: &[T], h: &DenseMatrix<T>, from: usize, out: &mut [T]) {
    let b = h.cols;
    if from == b {
        return;
    }
    for (c, &k) in w.iter().enumerate() {
        for (o, &v) in out[from..].iter_mut().zip(&h.data[c * b + from..(c + 1) * b]) {
            *o = *o + k * v;
        }
    }
}

/// `Aᵀ·D` for a feature-major batch `D` (m × b); per entry the same
/// ascending-row sum as `matvec_transposed`.
pub fn matmul_transposed<T: Scalar>(a: &DenseMatrix<T>, d: &DenseMatrix<T>) -> Result<DenseMatrix<T>, ShapeError> {
    if a.rows != d.rows {
        return Err(ShapeError::new("matmul_transposed", a.shape(), d.shape()));
    }
    let b = d.cols;
    probe::count_fma(a.rows * a.cols * b);
    probe::note_transposed(a.buffer_id());
    let mut out = DenseMatrix::zeros(a.cols, b);
    for r in 0..a.rows {
        let dr = d.row(r);
        for (c, &w) in a.row(r).iter().enumerate() {
            let o = &mut out.data[c * b..(c + 1) * b];
            for (os, &v) in o.iter_mut().zip(dr) {
                *os = *os + w * v;
            }
        }
    }
    Ok(out)
}

/// `Σ_s dz[:, s] · h_t[s, :]` in ascending `s`, the first term written
/// directly so a batch of one reproduces `outer` bit for bit.
///
/// `dz` is feature-major (m × b); `h_t` is sample-major (b × n).
pub fn outer_sum<T: Scalar>(dz: &DenseMatrix<T>, h_t: &DenseMatrix<T>) -> Result<DenseMatrix<T>, ShapeError> {
    if dz.cols != h_t.rows {
        return Err(ShapeError::new("outer_sum", dz.shape(), h_t.shape()));
    }
    let (m, n, b) = (dz.rows, h_t.cols, dz.cols);
    probe::count_fma(m * n * b);
    let mut out = DenseMatrix::zeros(m, n);
    if b == 0 || n == 0 {
        return Ok(out);
    }
    let full_c = n - n % TILE_COLS;
    let mut r = 0;
    while r + TILE_ROWS <= m {
        for c0 in (0..full_c).step_by(TILE_COLS) {
            let mut acc = [[T::zero(); TILE_COLS]; TILE_ROWS];
            let hv: &[T; TILE_COLS] = h_t.data[c0..c0 + TILE_COLS].try_into().expect("tile");
            for (i, row) in acc.iter_mut().enumerate() {
                let d = dz.data[(r + i) * b];
                for (o, &v) in row.iter_mut().zip(hv) {
                    *o = d * v;
                }
            }
            for s in 1..b {
                let hv: &[T; TILE_COLS] = h_t.data[s * n + c0..s * n + c0 + TILE_COLS].try_into().expect("tile");
                for (i, row) in acc.iter_mut().enumerate() {
                    let d = dz.data[(r + i) * b + s];
                    for (o, &v) in row.iter_mut().zip(hv) {
                        *o = *o + d * v;
                    }
                }
            }
            for (i, row) in acc.iter().enumerate() {
                out.data[(r + i) * n + c0..(r + i) * n + c0 + TILE_COLS].copy_from_slice(row);
            }
        }
        for i in r..r + TILE_ROWS {
            outer_row_tail(dz.row(i), h_t, full_c, &mut out.data[i * n..(i + 1) * n]);
        }
        r += TILE_ROWS;
    }
    while r < m {
        outer_row_tail(dz.row(r), h_t, 0, &mut out.data[r * n..(r + 1) * n]);
        r += 1;
    }
    Ok(out)
}

/// Columns `from..n` of one output row, same summation order as the tiles.
fn outer_row_tail<T: Scalar>(d: &[T], h_t: &DenseMatrix<T>, from: usize, out: &mut [T]) {
    let n = h_t.cols;
    if from == n {
        return;
    }
    let g = &mut out[from..];
    for (gc, &v) in g.iter_mut().zip(&h_t.data[from..n]) {
        *gc = d[0] * v;
    }
    for (s, &ds) in d.iter().enumerate().skip(1) {
        for (gc, &v) in g.iter_mut().zip(&h_t.data[s * n + from..(s + 1) * n]) {
            *gc = *gc + ds * v;
        }
    }
}

/// Counters for instrumented runs.
///
/// Disabled by default. While a probe is active on the current thread the
/// kernels add their FMA count and record which matrices entered a
/// transposed product.
pub mod probe {
    use std::cell::RefCell;

    #[derive(Debug, Clone, Default, PartialEq, Eq)]
    pub struct ProbeLog {
        /// FMAs performed by matrix-shaped kernels and matrix updates.
        pub matrix_fma: u64,
        /// Buffer ids of every matrix used as `Aᵀ` in a product.
        pub transposed_operands: Vec<usize>,
    }

    thread_local! {
        static ACTIVE: RefCell<Option<ProbeLog>> = const { RefCell::new(None) };
    }

    pub fn start() {
        ACTIVE.with(|p| *p.borrow_mut() = Some(ProbeLog::default()));
    }

    /// Stops the probe and returns what it saw (empty if none was active).
    pub fn finish() -> ProbeLog {
        ACTIVE.with(|p| p.borrow_mut().take()).unwrap_or_default()
    }

    pub fn is_active() -> bool {
        ACTIVE.with(|p| p.borrow().is_some())
    }

    pub(crate) fn count_fma(n: usize) {
        ACTIVE.with(|p| {
            if let Some(log) = p.borrow_mut().as_mut() {
                log.matrix_fma += n as u64;
            }
        });
    }

    pub(crate) fn note_transposed(id: usize) {
        ACTIVE.with(|p| {
            if let Some(log) = p.borrow_mut().as_mut() {
                log.transposed_operands.push(id);
            }
        });
    }
}
