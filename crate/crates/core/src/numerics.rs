//! Complex dense matrices, the scalar abstraction, and seeded sampling.
//!
//! Every size in this crate is tiny (a few dozen RIS elements at most), so
//! [`CMatrix`] is a plain row-major `Vec` with naive kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point scalar used throughout the simulator: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + ndarray::ScalarOperand
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

/// Dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<C<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("CMatrix::new", format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "CMatrix::new",
                format!("{} entries for shape {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C::new(T::zero(), T::zero()))
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        assert!(rows > 0 && cols > 0, "CMatrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C::new(T::one(), T::zero())
            } else {
                C::new(T::zero(), T::zero())
            }
        })
    }

    /// Square diagonal matrix with the given diagonal.
    pub fn diag(entries: &[C<T>]) -> Self {
        let zero = C::new(T::zero(), T::zero());
        Self::from_fn(entries.len(), entries.len(), |i, j| if i == j { entries[i] } else { zero })
    }

    pub fn column_vector(entries: Vec<C<T>>) -> Result<Self> {
        let n = entries.len();
        Self::new(n, 1, entries)
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| C::new(T::lit(v), T::zero())).collect())
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
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C<T>) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<C<T>> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} times {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn trace(&self) -> Result<C<T>> {
        if self.rows != self.cols {
            return Err(Error::shape("trace", format!("non-square {}x{}", self.rows, self.cols)));
        }
        Ok(self.diagonal().into_iter().fold(C::new(T::zero(), T::zero()), |acc, z| acc + z))
    }

    /// `Σ|a_ij|²`, equal to `tr(A Aᴴ)`.
    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self.get(i, j) == C::new(T::zero(), T::zero())))
    }
}

/// Seeded, splittable random stream.
///
/// Backed by the ChaCha8 block function, which is counter-based: a
/// `(seed, stream)` pair names an independent sequence, and the state
/// serializes exactly so runs can resume mid-stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RngState", from = "RngState")]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Serialized form of [`Rng`]; the 128-bit block position is split so
/// formats without `u128` can hold it.
#[derive(Clone, Serialize, Deserialize)]
struct RngState {
    seed: u64,
    key: [u8; 32],
    stream: u64,
    word_pos_hi: u64,
    word_pos_lo: u64,
}

impl From<Rng> for RngState {
    fn from(r: Rng) -> Self {
        let pos = r.inner.get_word_pos();
        Self {
            seed: r.seed,
            key: r.inner.get_seed(),
            stream: r.inner.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }
}

impl From<RngState> for Rng {
    fn from(s: RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(s.key);
        inner.set_stream(s.stream);
        inner.set_word_pos(((s.word_pos_hi as u128) << 64) | s.word_pos_lo as u128);
        Self { seed: s.seed, inner }
    }
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sequence `stream` under `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives a child stream, advancing `self` by one draw.
    pub fn split(&mut self) -> Rng {
        let child_seed = self.inner.next_u64();
        Rng::new(child_seed)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices from `0..n`.
    pub fn distinct_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Circularly-symmetric complex Gaussian with unit power: `E|z|² = 1`.
pub fn sample_cn01<T: Real>(rng: &mut Rng) -> C<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = rng.standard_normal() * s;
    let im = rng.standard_normal() * s;
    C::new(T::lit(re), T::lit(im))
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase<T: Real>(eps: T) -> T {
    let two_pi = T::TAU();
    let mut w = eps % two_pi;
    if w < T::zero() {
        w += two_pi;
    }
    // `x % 2π` of a tiny negative can round to exactly 2π after the add.
    if w >= two_pi {
        w = T::zero();
    }
    w
}
