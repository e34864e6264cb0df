//! Dense tensors and the elementary math every other module is built on.
//!
//! Tensors store their values flat in row-major order. The pipeline runs in
//! f64 by default; f32 is available through the same [`Scalar`] abstraction
//! for faster, lower-precision runs. Matrix operations require rank 2;
//! vectors travel as single-row matrices. Higher ranks are supported for
//! storage and serialization only.

use std::fmt;

use crate::error::{Error, Result};

/// Floating-point element type of the pipeline: f64 (default) or f32.
pub trait Scalar:
    num_traits::Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Byte tag written into checkpoints: 0 = f32, 1 = f64.
    const PRECISION_FLAG: u8;
    const BYTE_WIDTH: usize;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Gauss error function, used by the exact GELU.
    fn erf(self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one value from a little-endian slice of exactly `BYTE_WIDTH` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const PRECISION_FLAG: u8 = 1;
    const BYTE_WIDTH: usize = 8;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}

impl Scalar for f32 {
    const PRECISION_FLAG: u8 = 0;
    const BYTE_WIDTH: usize = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

/// Dense numeric array with shape; row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, checking that the shape has positive dimensions and
    /// accounts for every stored value.
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); n],
        }
    }

    /// Rank-2 constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Single-row matrix from a slice.
    pub fn row(values: &[F]) -> Self {
        Self {
            shape: vec![1, values.len()],
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from f64 literals; test and fixture convenience.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| F::from_f64(x)))
            .collect();
        Self {
            shape: vec![r, c],
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Row count; matrices only.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2, "rows() on rank-{} tensor", self.rank());
        self.shape[0]
    }

    /// Column count; matrices only.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: F) {
        self.data[r * self.shape[1] + c] = value;
    }

    pub fn row_slice(&self, r: usize) -> &[F] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// Errors if any stored value is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric(format!("non-finite value in {context}")))
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Lossy precision conversion (used when importing checkpoints written at
    /// the other precision).
    pub fn convert<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }

    /// Matrix with entries drawn uniformly from `(-magnitude, magnitude)`.
    pub fn random_uniform(
        rng: &mut impl rand::Rng,
        rows: usize,
        cols: usize,
        magnitude: f64,
    ) -> Self {
        let data = (0..rows * cols)
            .map(|_| F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * magnitude))
            .collect();
        Self {
            shape: vec![rows, cols],
            data,
        }
    }
}

fn ensure_matrix<F: Scalar>(t: &Tensor<F>, what: &str) -> Result<()> {
    if t.rank() == 2 {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what} expects a matrix, got shape {:?}",
            t.shape()
        )))
    }
}

fn ensure_same_shape<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, op: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )))
    }
}

/// Standard matrix product.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(a, "matmul")?;
    ensure_matrix(b, "matmul")?;
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "matmul: inner dimensions disagree, {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(vec![m, n]);
    // i-k-j order keeps the inner loop streaming over contiguous rows of b.
    for i in 0..m {
        for p in 0..k {
            let aik = a.data[i * k + p];
            if aik == F::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aik * brow[j];
            }
        }
    }
    Ok(out)
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_nt<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(a, "matmul_nt")?;
    ensure_matrix(b, "matmul_nt")?;
    if a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "matmul_nt: inner dimensions disagree, {:?} x {:?}^T",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for p in 0..k {
                acc = acc + arow[p] * brow[p];
            }
            out.data[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// `a^T * b` without materializing the transpose.
pub fn matmul_tn<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(a, "matmul_tn")?;
    ensure_matrix(b, "matmul_tn")?;
    if a.rows() != b.rows() {
        return Err(Error::shape(format!(
            "matmul_tn: inner dimensions disagree, {:?}^T x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.cols(), a.rows(), b.cols());
    let mut out = Tensor::zeros(vec![m, n]);
    for p in 0..k {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            if api == F::zero() {
                continue;
            }
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + api * brow[j];
            }
        }
    }
    Ok(out)
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_same_shape(a, b, "add")?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

pub fn mul_elem<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_same_shape(a, b, "mul_elem")?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

pub fn scale<F: Scalar>(a: &Tensor<F>, c: F) -> Tensor<F> {
    a.map(|v| v * c)
}

/// Adds a single-row matrix to every row of `a`.
pub fn add_row<F: Scalar>(a: &Tensor<F>, row: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(a, "add_row")?;
    ensure_matrix(row, "add_row")?;
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(Error::shape(format!(
            "add_row: {:?} does not broadcast over {:?}",
            row.shape(),
            a.shape()
        )));
    }
    let mut out = a.clone();
    let c = a.cols();
    for r in 0..a.rows() {
        for j in 0..c {
            out.data[r * c + j] = out.data[r * c + j] + row.data[j];
        }
    }
    Ok(out)
}

/// Column-wise sum collapsed into a single row.
pub fn sum_rows<F: Scalar>(a: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(a, "sum_rows")?;
    let c = a.cols();
    let mut out = Tensor::zeros(vec![1, c]);
    for r in 0..a.rows() {
        for j in 0..c {
            out.data[j] = out.data[j] + a.data[r * c + j];
        }
    }
    Ok(out)
}

/// Column-wise maximum and, for each column, the row index attaining it
/// (first row on ties).
pub fn max_rows<F: Scalar>(a: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    ensure_matrix(a, "max_rows")?;
    let c = a.cols();
    let mut out = Tensor::zeros(vec![1, c]);
    let mut argmax = vec![0usize; c];
    for (j, slot) in argmax.iter_mut().enumerate() {
        let mut best = a.data[j];
        for r in 1..a.rows() {
            let v = a.data[r * c + j];
            if v > best {
                best = v;
                *slot = r;
            }
        }
        out.data[j] = best;
    }
    Ok((out, argmax))
}

pub fn slice_rows<F: Scalar>(a: &Tensor<F>, start: usize, end: usize) -> Result<Tensor<F>> {
    ensure_matrix(a, "slice_rows")?;
    if start >= end || end > a.rows() {
        return Err(Error::shape(format!(
            "slice_rows: range {start}..{end} out of bounds for {} rows",
            a.rows()
        )));
    }
    let c = a.cols();
    Ok(Tensor {
        shape: vec![end - start, c],
        data: a.data[start * c..end * c].to_vec(),
    })
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn concat_cols<F: Scalar>(parts: &[&Tensor<F>]) -> Result<Tensor<F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_cols: no inputs"))?;
    ensure_matrix(first, "concat_cols")?;
    let rows = first.rows();
    let mut total = 0;
    for p in parts {
        ensure_matrix(p, "concat_cols")?;
        if p.rows() != rows {
            return Err(Error::shape(format!(
                "concat_cols: row counts differ ({} vs {})",
                rows,
                p.rows()
            )));
        }
        total += p.cols();
    }
    let mut out = Tensor::zeros(vec![rows, total]);
    for r in 0..rows {
        let mut offset = 0;
        for p in parts {
            let c = p.cols();
            out.data[r * total + offset..r * total + offset + c]
                .copy_from_slice(&p.data[r * c..(r + 1) * c]);
            offset += c;
        }
    }
    Ok(out)
}

/// Surrounds a matrix with `before`/`after` all-zero rows.
pub fn pad_rows<F: Scalar>(a: &Tensor<F>, before: usize, after: usize) -> Result<Tensor<F>> {
    ensure_matrix(a, "pad_rows")?;
    let c = a.cols();
    let mut out = Tensor::zeros(vec![a.rows() + before + after, c]);
    out.data[before * c..(before + a.rows()) * c].copy_from_slice(&a.data);
    Ok(out)
}

/// Sliding windows along the row axis, each flattened into one output row:
/// output row `t` is the concatenation of input rows `t..t+window`.
pub fn window_rows<F: Scalar>(a: &Tensor<F>, window: usize) -> Result<Tensor<F>> {
    ensure_matrix(a, "window_rows")?;
    if window == 0 || window > a.rows() {
        return Err(Error::shape(format!(
            "window_rows: window {window} invalid for {} rows",
            a.rows()
        )));
    }
    let c = a.cols();
    let n_out = a.rows() - window + 1;
    let mut out = Tensor::zeros(vec![n_out, window * c]);
    for t in 0..n_out {
        out.data[t * window * c..(t + 1) * window * c]
            .copy_from_slice(&a.data[t * c..(t + window) * c]);
    }
    Ok(out)
}

/// Row lookup: output row `t` is `table` row `ids[t]`.
pub fn gather_rows<F: Scalar>(table: &Tensor<F>, ids: &[usize]) -> Result<Tensor<F>> {
    ensure_matrix(table, "gather_rows")?;
    if ids.is_empty() {
        return Err(Error::shape("gather_rows: empty id list"));
    }
    let c = table.cols();
    let mut out = Tensor::zeros(vec![ids.len(), c]);
    for (t, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::data(format!(
                "gather_rows: id {id} out of bounds for table with {} rows",
                table.rows()
            )));
        }
        out.data[t * c..(t + 1) * c].copy_from_slice(table.row_slice(id));
    }
    Ok(out)
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
///
/// The normalizer is accumulated in f64 regardless of `F` so that each row
/// sums to 1 up to elementwise rounding only.
pub fn softmax_rows<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    ensure_matrix(x, "softmax_rows")?;
    x.validate_finite("softmax_rows input")?;
    let (r, c) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(vec![r, c]);
    for i in 0..r {
        let row = x.row_slice(i);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = 0.0f64;
        for (j, &value) in row.iter().enumerate() {
            let e = (value - max).exp();
            out.data[i * c + j] = e;
            sum += e.as_f64();
        }
        let inv = F::from_f64(1.0 / sum);
        for j in 0..c {
            out.data[i * c + j] = out.data[i * c + j] * inv;
        }
    }
    Ok(out)
}

/// Kinds of elementwise activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
    Tanh,
}

impl Activation {
    /// Parses a configuration string.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }

    pub fn apply<F: Scalar>(self, v: F) -> F {
        match self {
            Activation::Relu => v.max(F::zero()),
            Activation::Gelu => v * normal_cdf(v),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative at `v` (for tanh, expressed via the input).
    pub fn derivative<F: Scalar>(self, v: F) -> F {
        match self {
            Activation::Relu => {
                if v > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Gelu => normal_cdf(v) + v * normal_pdf(v),
            Activation::Tanh => {
                let t = v.tanh();
                F::one() - t * t
            }
        }
    }
}

/// Standard normal CDF via the error function (exact GELU formulation).
fn normal_cdf<F: Scalar>(v: F) -> F {
    let half = F::from_f64(0.5);
    let inv_sqrt2 = F::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    half * (F::one() + (v * inv_sqrt2).erf())
}

fn normal_pdf<F: Scalar>(v: F) -> F {
    let inv_sqrt_2pi = F::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    inv_sqrt_2pi * (-(v * v) * F::from_f64(0.5)).exp()
}

pub fn activation<F: Scalar>(kind: Activation, x: &Tensor<F>) -> Result<Tensor<F>> {
    x.validate_finite("activation input")?;
    Ok(x.map(|v| kind.apply(v)))
}

/// Probabilities below this are clamped before taking the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Index into the two-class output for a binary label: label 1 ("correct")
/// is class index 0, label 0 is class index 1.
pub fn label_class_index(label: u8) -> Result<usize> {
    match label {
        1 => Ok(0),
        0 => Ok(1),
        other => Err(Error::data(format!("label must be 0 or 1, got {other}"))),
    }
}

/// Negative log-likelihood of a two-class probability vector.
///
/// Probabilities must sum to 1 within 1e-6; the selected probability is
/// clamped at [`PROBABILITY_FLOOR`] so a confident miss yields a large but
/// finite loss.
pub fn cross_entropy<F: Scalar>(probabilities: &Tensor<F>, label: u8) -> Result<F> {
    if probabilities.len() != 2 {
        return Err(Error::shape(format!(
            "cross_entropy expects 2 probabilities, got shape {:?}",
            probabilities.shape()
        )));
    }
    probabilities.validate_finite("cross_entropy input")?;
    let sum = probabilities
        .data()
        .iter()
        .fold(0.0, |acc, v| acc + v.as_f64());
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::numeric(format!(
            "cross_entropy: probabilities sum to {sum}, expected 1"
        )));
    }
    let idx = label_class_index(label)?;
    let p = probabilities.data()[idx].as_f64().max(PROBABILITY_FLOOR);
    Ok(F::from_f64(-p.ln()))
}
