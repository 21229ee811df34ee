//! Dense real and exact-dyadic matrix arithmetic.
//!
//! [`RealMatrix`] is a row-major `f64` matrix used by the floating-point
//! evaluators. [`DyadicMatrix`] stores entries `c / 2^d` with one shared
//! exponent and arbitrary-precision numerators; its products are exact.
//!
//! Tensor products follow the usual convention: for `a ⊗ b`, row index
//! `i1 * b.rows + i2` and column index `j1 * b.cols + j2`, so the left factor
//! is the most significant digit of the mixed-radix index.

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of entries of any constructed matrix.
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 20;

/// Default cap on the rounding exponent accepted by [`round_to_dyadic`].
pub const DEFAULT_MAX_EXPONENT: u32 = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{rows}x{cols} matrix exceeds the limit of {limit} entries")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },
    #[error("expected {expected} entries for the given shape, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dyadic exponent {exponent} exceeds the maximum {max}")]
    ExponentTooLarge { exponent: u32, max: u32 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_size(rows: usize, cols: usize, limit: usize) -> Result<()> {
    match rows.checked_mul(cols) {
        Some(n) if n <= limit => Ok(()),
        _ => Err(LinalgError::TooLarge { rows, cols, limit }),
    }
}

/// Row-major dense matrix of finite doubles.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for RealMatrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::BadLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::BadLength {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn row_vector(v: Vec<f64>) -> Result<Self> {
        Self::new(1, v.len(), v)
    }

    pub fn column_vector(v: Vec<f64>) -> Result<Self> {
        Self::new(v.len(), 1, v)
    }

    /// Permutation of tensor factors.
    ///
    /// The input space is `dims[0] ⊗ dims[1] ⊗ …`; output factor `k` is input
    /// factor `order[k]`. Entries are exactly 0 or 1.
    pub fn factor_permutation(dims: &[usize], order: &[usize]) -> Result<Self> {
        assert_eq!(dims.len(), order.len(), "permutation length mismatch");
        let total: usize = dims.iter().product();
        check_size(total, total, DEFAULT_MAX_ENTRIES)?;
        let out_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
        let mut m = Self::zeros(total, total);
        let mut digits = vec![0usize; dims.len()];
        for src in 0..total {
            let mut rest = src;
            for k in (0..dims.len()).rev() {
                digits[k] = rest % dims[k];
                rest /= dims[k];
            }
            let mut dst = 0;
            for (k, &from) in order.iter().enumerate() {
                dst = dst * out_dims[k] + digits[from];
            }
            m.data[dst * total + src] = 1.0;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        self.kron_with_limit(other, DEFAULT_MAX_ENTRIES)
    }

    pub fn kron_with_limit(&self, other: &Self, limit: usize) -> Result<Self> {
        let rows = self
            .rows
            .checked_mul(other.rows)
            .ok_or(LinalgError::TooLarge {
                rows: usize::MAX,
                cols: usize::MAX,
                limit,
            })?;
        let cols = self
            .cols
            .checked_mul(other.cols)
            .ok_or(LinalgError::TooLarge {
                rows,
                cols: usize::MAX,
                limit,
            })?;
        check_size(rows, cols, limit)?;
        let mut data = vec![0.0; rows * cols];
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.get(i1, j1);
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..other.rows {
                    let base = (i1 * other.rows + i2) * cols + j1 * other.cols;
                    for j2 in 0..other.cols {
                        data[base + j2] = a * other.get(i2, j2);
                    }
                }
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(LinalgError::ShapeMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(LinalgError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Largest entrywise absolute difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        (self.shape() == other.shape()).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
    }
}

/// Operator-norm bound for a matrix whose entries are all at most `eps` in
/// magnitude: `rows * cols * eps`.
pub fn entrywise_opnorm_bound(rows: usize, cols: usize, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0);
    rows as f64 * cols as f64 * eps
}

/// Certified upper bound on the operator (spectral) norm: the Frobenius norm.
pub fn opnorm_upper(a: &RealMatrix) -> f64 {
    a.frobenius_norm()
}

/// Operations needed to assemble layer matrices, shared by the float and
/// exact matrix types.
pub trait LayerAlgebra: Sized + Clone {
    fn identity_of(n: usize) -> Self;
    fn permutation_of(dims: &[usize], order: &[usize]) -> Result<Self>;
    fn kron_with(&self, other: &Self, limit: usize) -> Result<Self>;
    fn matmul_with(&self, other: &Self) -> Result<Self>;
    fn dims(&self) -> (usize, usize);
}

impl LayerAlgebra for RealMatrix {
    fn identity_of(n: usize) -> Self {
        Self::identity(n)
    }

    fn permutation_of(dims: &[usize], order: &[usize]) -> Result<Self> {
        Self::factor_permutation(dims, order)
    }

    fn kron_with(&self, other: &Self, limit: usize) -> Result<Self> {
        self.kron_with_limit(other, limit)
    }

    fn matmul_with(&self, other: &Self) -> Result<Self> {
        self.matmul(other)
    }

    fn dims(&self) -> (usize, usize) {
        self.shape()
    }
}

impl LayerAlgebra for DyadicMatrix {
    fn identity_of(n: usize) -> Self {
        Self::identity(n)
    }

    fn permutation_of(dims: &[usize], order: &[usize]) -> Result<Self> {
        let p = RealMatrix::factor_permutation(dims, order)?;
        Ok(Self::from_integer_matrix(&p).expect("permutation entries are integers"))
    }

    fn kron_with(&self, other: &Self, limit: usize) -> Result<Self> {
        check_size(self.rows * other.rows, self.cols * other.cols, limit)?;
        self.kron(other)
    }

    fn matmul_with(&self, other: &Self) -> Result<Self> {
        self.matmul(other)
    }

    fn dims(&self) -> (usize, usize) {
        self.shape()
    }
}

/// Exact dyadic rational `numerator / 2^exponent`.
///
/// Representations are not reduced; equality compares values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dyadic {
    pub numerator: BigInt,
    pub exponent: u32,
}

impl Dyadic {
    pub fn new(numerator: impl Into<BigInt>, exponent: u32) -> Self {
        Self {
            numerator: numerator.into(),
            exponent,
        }
    }

    pub fn to_f64(&self) -> f64 {
        dyadic_to_f64(&self.numerator, u64::from(self.exponent))
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (self.exponent, other.exponent);
        if a >= b {
            self.numerator == (&other.numerator << (a - b))
        } else {
            (&self.numerator << (b - a)) == other.numerator
        }
    }
}

impl Eq for Dyadic {}

/// Nearest-double value of `num / 2^exp`, without overflowing intermediate
/// conversions for very wide numerators.
pub fn dyadic_to_f64(num: &BigInt, exp: u64) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let bits = num.bits();
    // keep 64 significant bits; the discarded tail is below f64 resolution
    let shift = bits.saturating_sub(64);
    let head = if shift > 0 { num >> shift } else { num.clone() };
    let mantissa = head.to_f64().unwrap_or(0.0);
    let mut e = shift as i64 - exp as i64;
    let mut value = mantissa;
    // apply 2^e in chunks that cannot overflow or underflow prematurely
    while e > 0 {
        let step = e.min(1000);
        value *= 2f64.powi(step as i32);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        value *= 2f64.powi(-(step as i32));
        e += step;
    }
    value
}

/// Rounds `x * 2^d` to the nearest integer (ties away from zero), exactly.
fn round_scaled(x: f64, d: u32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, e) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let s = e + i64::from(d);
    let magnitude = if s >= 0 {
        BigInt::from(mantissa) << (s as u64)
    } else {
        let sh = (-s) as u32;
        if sh >= 54 {
            // mantissa < 2^53, so the scaled value is below one half
            BigInt::zero()
        } else {
            let q = mantissa >> sh;
            let rem = mantissa & ((1u64 << sh) - 1);
            let half = 1u64 << (sh - 1);
            BigInt::from(if rem >= half { q + 1 } else { q })
        }
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Matrix of dyadic rationals sharing one exponent:
/// `value(i, j) = numerators[i * cols + j] / 2^exponent`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicMatrix {
    rows: usize,
    cols: usize,
    exponent: u32,
    numerators: Vec<BigInt>,
}

impl DyadicMatrix {
    pub fn new(rows: usize, cols: usize, exponent: u32, numerators: Vec<BigInt>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        if numerators.len() != rows * cols {
            return Err(LinalgError::BadLength {
                expected: rows * cols,
                got: numerators.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            exponent,
            numerators,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut numerators = vec![BigInt::zero(); n * n];
        for i in 0..n {
            numerators[i * n + i] = BigInt::from(1);
        }
        Self {
            rows: n,
            cols: n,
            exponent: 0,
            numerators,
        }
    }

    /// Exact conversion of a matrix whose entries are integers (e.g. a
    /// permutation matrix). Returns `None` if any entry is fractional.
    pub fn from_integer_matrix(m: &RealMatrix) -> Option<Self> {
        let mut numerators = Vec::with_capacity(m.data.len());
        for &x in &m.data {
            if x.fract() != 0.0 {
                return None;
            }
            numerators.push(round_scaled(x, 0));
        }
        Some(Self {
            rows: m.rows,
            cols: m.cols,
            exponent: 0,
            numerators,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    #[inline]
    pub fn numerator(&self, i: usize, j: usize) -> &BigInt {
        &self.numerators[i * self.cols + j]
    }

    pub fn numerators(&self) -> &[BigInt] {
        &self.numerators
    }

    pub fn get(&self, i: usize, j: usize) -> Dyadic {
        Dyadic::new(self.numerator(i, j).clone(), self.exponent)
    }

    pub fn to_real(&self) -> RealMatrix {
        let e = u64::from(self.exponent);
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .numerators
                .iter()
                .map(|n| dyadic_to_f64(n, e))
                .collect(),
        }
    }

    /// Same values expressed with a larger shared exponent.
    pub fn rescaled(&self, exponent: u32) -> Self {
        assert!(
            exponent >= self.exponent,
            "cannot lower a shared exponent without rounding"
        );
        let shift = exponent - self.exponent;
        Self {
            rows: self.rows,
            cols: self.cols,
            exponent,
            numerators: self.numerators.iter().map(|n| n << shift).collect(),
        }
    }

    /// Value equality, independent of the shared exponent.
    pub fn value_eq(&self, other: &Self) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        let e = self.exponent.max(other.exponent);
        let a = self.rescaled(e);
        let b = other.rescaled(e);
        a.numerators == b.numerators
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "dyadic matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut numerators = vec![BigInt::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.numerator(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.numerator(k, j);
                    if !b.is_zero() {
                        numerators[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            exponent: self.exponent + other.exponent,
            numerators,
        })
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        check_size(rows, cols, DEFAULT_MAX_ENTRIES)?;
        let mut numerators = vec![BigInt::zero(); rows * cols];
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.numerator(i1, j1);
                if a.is_zero() {
                    continue;
                }
                for i2 in 0..other.rows {
                    let base = (i1 * other.rows + i2) * cols + j1 * other.cols;
                    for j2 in 0..other.cols {
                        numerators[base + j2] = a * other.numerator(i2, j2);
                    }
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            exponent: self.exponent + other.exponent,
            numerators,
        })
    }

    /// Largest absolute numerator, useful for sizing diagnostics.
    pub fn max_abs_numerator(&self) -> BigInt {
        self.numerators
            .iter()
            .map(|n| n.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.numerators.iter().all(|n| n.sign() == Sign::NoSign)
    }
}

/// Rounds every entry to the nearest multiple of `2^-d`.
///
/// The entrywise error is at most `2^-(d+1)`.
pub fn round_to_dyadic(m: &RealMatrix, d: u32) -> Result<DyadicMatrix> {
    round_to_dyadic_with_limit(m, d, DEFAULT_MAX_EXPONENT)
}

pub fn round_to_dyadic_with_limit(
    m: &RealMatrix,
    d: u32,
    max_exponent: u32,
) -> Result<DyadicMatrix> {
    if d > max_exponent {
        return Err(LinalgError::ExponentTooLarge {
            exponent: d,
            max: max_exponent,
        });
    }
    Ok(DyadicMatrix {
        rows: m.rows,
        cols: m.cols,
        exponent: d,
        numerators: m.data.iter().map(|&x| round_scaled(x, d)).collect(),
    })
}
