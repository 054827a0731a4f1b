//! Per-channel DCT-II over token sequences, band-stop masking, and the exact inverse.
//!
//! The forward transform is the un-normalized DCT-II
//!
//! ```text
//! f[m] = sum_{i=0}^{n-1} x[i] * cos(pi * m * (i + 1/2) / n)
//! ```
//!
//! applied independently to each of the `d` channels of a sequence. The inverse
//! is its left inverse
//!
//! ```text
//! x[i] = (1/n) * (f[0] + 2 * sum_{m=1}^{n-1} f[m] * cos(pi * m * (i + 1/2) / n))
//! ```
//!
//! Two evaluation routes exist: a direct `O(n^2)` summation over a cosine table
//! and an `O(n log n)` route through a length-`n` complex FFT (Makhoul's
//! reordering). Both accumulate in `T::Acc`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, Zero};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{Accumulator, Scalar};

/// Ordered sequence of `n` tokens, each a `d`-dimensional vector. Token 0 is the
/// class token.
///
/// Storage is token-major: `data[i * d + j]` is channel `j` of token `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
}

pub const CLASS_TOKEN_INDEX: usize = 0;

impl<T: Scalar> EmbeddingSequence<T> {
    pub fn new(n: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDimension(format!("sequence must have n >= 1 and d >= 1 (got n = {n}, d = {d})")));
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!("expected {} values for n = {n}, d = {d}, got {}", n * d, data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { location: format!("token {}, channel {}", pos / d, pos % d) });
        }
        Ok(Self { n, d, data })
    }

    /// Builds a sequence from token rows.
    pub fn from_tokens(tokens: &[Vec<T>]) -> Result<Self> {
        let n = tokens.len();
        let d = tokens.first().map_or(0, Vec::len);
        if let Some((i, row)) = tokens.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Shape(format!("token {i} has {} channels, token 0 has {d}", row.len())));
        }
        Self::new(n, d, tokens.concat())
    }

    /// Builds an `n x d` sequence from a generator `f(token, channel)`.
    pub fn from_fn(n: usize, d: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(f(i, j));
            }
        }
        Self::new(n, d, data)
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, vec![T::zero(); n * d])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, token: usize, channel: usize) -> T {
        self.data[token * self.d + channel]
    }

    pub fn token(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn class_token(&self) -> &[T] {
        self.token(CLASS_TOKEN_INDEX)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn channel(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// Converts to another precision. Fails only if a value overflows the target type.
    pub fn cast<U: Scalar>(&self) -> Result<EmbeddingSequence<U>> {
        EmbeddingSequence::new(self.n, self.d, self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.d), (other.n, other.d), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).fold(0.0, f64::max)
    }
}

/// `d x n` matrix of DCT-II coefficients; row `j` is the spectrum of channel `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix<T> {
    d: usize,
    n: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> SpectralMatrix<T> {
    /// `coeffs` is channel-major: `coeffs[j * n + m]`.
    pub fn new(d: usize, n: usize, coeffs: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDimension(format!("spectrum must have n >= 1 and d >= 1 (got n = {n}, d = {d})")));
        }
        if coeffs.len() != n * d {
            return Err(Error::Shape(format!(
                "expected {} coefficients for d = {d}, n = {n}, got {}",
                n * d,
                coeffs.len()
            )));
        }
        if let Some(pos) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { location: format!("channel {}, frequency {}", pos / n, pos % n) });
        }
        Ok(Self { d, n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    #[inline]
    pub fn get(&self, channel: usize, freq: usize) -> T {
        self.coeffs[channel * self.n + freq]
    }

    pub fn row(&self, channel: usize) -> &[T] {
        &self.coeffs[channel * self.n..(channel + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.coeffs.chunks_exact(self.n)
    }

    pub fn column(&self, freq: usize) -> Vec<T> {
        (0..self.d).map(|j| self.get(j, freq)).collect()
    }
}

/// Band-stop filter: the set of frequency indices to zero out.
///
/// The same filter applies to every channel. The mask `M[b]` is all ones except
/// at masked columns; it is never materialized.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BandFilter {
    n: usize,
    masked: Vec<usize>,
}

impl BandFilter {
    pub fn new(n: usize, masked: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut masked: Vec<usize> = masked.into_iter().collect();
        if let Some(&index) = masked.iter().find(|&&m| m >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        masked.sort_unstable();
        masked.dedup();
        Ok(Self { n, masked })
    }

    /// Passes every frequency.
    pub fn identity(n: usize) -> Self {
        Self { n, masked: Vec::new() }
    }

    /// Stops every frequency.
    pub fn full(n: usize) -> Self {
        Self { n, masked: (0..n).collect() }
    }

    pub fn single(n: usize, m: usize) -> Result<Self> {
        Self::new(n, [m])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted, deduplicated masked indices.
    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    pub fn is_masked(&self, m: usize) -> bool {
        self.masked.binary_search(&m).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    /// Indices `0..n` that pass through.
    pub fn passed(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&m| !self.is_masked(m))
    }

    /// The binary mask row `M[b]`, 1 where a frequency passes.
    pub fn mask_row(&self) -> Vec<u8> {
        (0..self.n).map(|m| u8::from(!self.is_masked(m))).collect()
    }

    pub fn union(&self, other: &BandFilter) -> Result<BandFilter> {
        if self.n != other.n {
            return Err(Error::Shape(format!("cannot combine filters for n = {} and n = {}", self.n, other.n)));
        }
        BandFilter::new(self.n, self.masked.iter().chain(&other.masked).copied())
    }
}

/// Which route evaluates the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformKind {
    /// Direct summation over a cosine table, `O(n^2)` per channel.
    Direct,
    /// FFT-based, `O(n log n)` per channel.
    Fast,
    /// `Fast` from [`FAST_THRESHOLD`] tokens on, `Direct` below.
    #[default]
    Auto,
}

pub const FAST_THRESHOLD: usize = 16;

impl TransformKind {
    fn resolve(self, n: usize) -> TransformKind {
        match self {
            TransformKind::Auto if n >= FAST_THRESHOLD => TransformKind::Fast,
            TransformKind::Auto => TransformKind::Direct,
            k => k,
        }
    }
}

/// `cos(pi * m * (2i + 1) / (2n))` with the argument reduced modulo the period
/// before evaluation, so large `m * i` products stay accurate.
pub fn dct_cosine(m: usize, i: usize, n: usize) -> f64 {
    let period = 4 * n;
    let k = (m % period) * ((2 * i + 1) % period) % period;
    (PI * k as f64 / (2 * n) as f64).cos()
}

/// Forward FFT, inverse FFT and the twiddles `exp(-i pi m / 2n)`.
type FftRoute<A> = (Arc<dyn Fft<A>>, Arc<dyn Fft<A>>, Vec<Complex<A>>);

/// Precomputed state for one transform length.
pub struct DctPlan<A: Accumulator> {
    n: usize,
    kind: TransformKind,
    /// `table[m * n + i] = cos(pi m (i + 1/2) / n)`; only for the direct route.
    table: Vec<A>,
    fft: Option<FftRoute<A>>,
}

impl<A: Accumulator> DctPlan<A> {
    pub fn new(n: usize, kind: TransformKind) -> Self {
        let kind = kind.resolve(n);
        match kind {
            TransformKind::Fast => {
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(n);
                let inverse = planner.plan_fft_inverse(n);
                // e^{-i pi m / 2n}
                let twiddles = (0..n)
                    .map(|m| {
                        let angle = -PI * m as f64 / (2 * n) as f64;
                        Complex::new(acc::<A>(angle.cos()), acc::<A>(angle.sin()))
                    })
                    .collect();
                Self { n, kind, table: Vec::new(), fft: Some((forward, inverse, twiddles)) }
            }
            _ => {
                let mut table = Vec::with_capacity(n * n);
                for m in 0..n {
                    for i in 0..n {
                        table.push(acc::<A>(dct_cosine(m, i, n)));
                    }
                }
                Self { n, kind, table, fft: None }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    /// Forward DCT-II of one channel, `input.len() == output.len() == n`.
    pub fn forward(&self, input: &[A], output: &mut [A], scratch: &mut Vec<Complex<A>>) {
        debug_assert_eq!(input.len(), self.n);
        debug_assert_eq!(output.len(), self.n);
        match &self.fft {
            None => {
                for (m, out) in output.iter_mut().enumerate() {
                    let row = &self.table[m * self.n..(m + 1) * self.n];
                    *out = row.iter().zip(input).fold(A::zero(), |s, (&c, &x)| s + c * x);
                }
            }
            Some((fft, _, twiddles)) => {
                let n = self.n;
                scratch.clear();
                scratch.resize(n, Complex::zero());
                // Even-indexed samples ascending, odd-indexed samples descending.
                for (k, &x) in input.iter().step_by(2).enumerate() {
                    scratch[k] = Complex::new(x, A::zero());
                }
                for (k, &x) in input.iter().skip(1).step_by(2).enumerate() {
                    scratch[n - 1 - k] = Complex::new(x, A::zero());
                }
                fft.process(scratch);
                for ((out, v), w) in output.iter_mut().zip(scratch.iter()).zip(twiddles) {
                    *out = (v * w).re;
                }
            }
        }
    }

    /// Inverse transform of one channel.
    pub fn inverse(&self, input: &[A], output: &mut [A], scratch: &mut Vec<Complex<A>>) {
        debug_assert_eq!(input.len(), self.n);
        debug_assert_eq!(output.len(), self.n);
        let n = self.n;
        let inv_n = A::one() / acc::<A>(n as f64);
        match &self.fft {
            None => {
                let two = acc::<A>(2.0);
                for (i, out) in output.iter_mut().enumerate() {
                    let mut sum = input[0];
                    for (m, f) in input.iter().enumerate().skip(1) {
                        sum = sum + two * *f * self.table[m * n + i];
                    }
                    *out = sum * inv_n;
                }
            }
            Some((_, ifft, twiddles)) => {
                scratch.clear();
                // V[m] = conj(w_m) * (f[m] - i f[n - m]), with f[n] = 0.
                scratch.extend((0..n).map(|m| {
                    let mirrored = if m == 0 { A::zero() } else { input[n - m] };
                    twiddles[m].conj() * Complex::new(input[m], -mirrored)
                }));
                ifft.process(scratch);
                for k in 0..n.div_ceil(2) {
                    output[2 * k] = scratch[k].re * inv_n;
                }
                for k in 0..n / 2 {
                    output[2 * k + 1] = scratch[n - 1 - k].re * inv_n;
                }
            }
        }
    }
}

#[inline]
fn acc<A: Accumulator>(v: f64) -> A {
    <A as FromPrimitive>::from_f64(v).expect("accumulator must represent f64 constants")
}

/// Forward DCT-II of every channel.
pub fn dct_forward<T: Scalar>(seq: &EmbeddingSequence<T>) -> Result<SpectralMatrix<T>> {
    dct_forward_with(seq, TransformKind::Auto)
}

pub fn dct_forward_with<T: Scalar>(seq: &EmbeddingSequence<T>, kind: TransformKind) -> Result<SpectralMatrix<T>> {
    let plan = DctPlan::<T::Acc>::new(seq.n, kind);
    forward_planned(seq, &plan)
}

fn forward_planned<T: Scalar>(seq: &EmbeddingSequence<T>, plan: &DctPlan<T::Acc>) -> Result<SpectralMatrix<T>> {
    let (n, d) = (seq.n, seq.d);
    let mut coeffs = vec![T::zero(); n * d];
    let mut channel = vec![T::Acc::zero(); n];
    let mut out = vec![T::Acc::zero(); n];
    let mut scratch = Vec::new();
    for j in 0..d {
        for (i, c) in channel.iter_mut().enumerate() {
            *c = seq.get(i, j).widen();
        }
        plan.forward(&channel, &mut out, &mut scratch);
        for (dst, &v) in coeffs[j * n..(j + 1) * n].iter_mut().zip(&out) {
            *dst = T::narrow(v);
        }
    }
    SpectralMatrix::new(d, n, coeffs)
}

/// Inverse transform of every channel.
pub fn dct_inverse<T: Scalar>(spec: &SpectralMatrix<T>) -> Result<EmbeddingSequence<T>> {
    dct_inverse_with(spec, TransformKind::Auto)
}

pub fn dct_inverse_with<T: Scalar>(spec: &SpectralMatrix<T>, kind: TransformKind) -> Result<EmbeddingSequence<T>> {
    let plan = DctPlan::<T::Acc>::new(spec.n, kind);
    inverse_planned(spec, &plan)
}

fn inverse_planned<T: Scalar>(spec: &SpectralMatrix<T>, plan: &DctPlan<T::Acc>) -> Result<EmbeddingSequence<T>> {
    let (n, d) = (spec.n, spec.d);
    let mut data = vec![T::zero(); n * d];
    let mut row = vec![T::Acc::zero(); n];
    let mut out = vec![T::Acc::zero(); n];
    let mut scratch = Vec::new();
    for j in 0..d {
        for (dst, &v) in row.iter_mut().zip(spec.row(j)) {
            *dst = v.widen();
        }
        plan.inverse(&row, &mut out, &mut scratch);
        for (i, &v) in out.iter().enumerate() {
            data[i * d + j] = T::narrow(v);
        }
    }
    EmbeddingSequence::new(n, d, data)
}

/// `S = F ⊙ M[b]`: zeroes the masked columns, leaves the rest untouched.
pub fn apply_filter<T: Scalar>(spec: &SpectralMatrix<T>, filter: &BandFilter) -> Result<SpectralMatrix<T>> {
    if filter.n != spec.n {
        return Err(Error::Shape(format!("filter is for n = {}, spectrum has n = {}", filter.n, spec.n)));
    }
    let mut out = spec.clone();
    for row in out.coeffs.chunks_exact_mut(spec.n) {
        for &m in &filter.masked {
            row[m] = T::zero();
        }
    }
    Ok(out)
}

/// Forward transform, band-stop mask, inverse transform.
pub fn filter_sequence<T: Scalar>(seq: &EmbeddingSequence<T>, filter: &BandFilter) -> Result<EmbeddingSequence<T>> {
    filter_sequence_with(seq, filter, TransformKind::Auto)
}

pub fn filter_sequence_with<T: Scalar>(
    seq: &EmbeddingSequence<T>,
    filter: &BandFilter,
    kind: TransformKind,
) -> Result<EmbeddingSequence<T>> {
    if filter.n != seq.n {
        return Err(Error::Shape(format!("filter is for n = {}, sequence has n = {}", filter.n, seq.n)));
    }
    let plan = DctPlan::<T::Acc>::new(seq.n, kind);
    let spectrum = forward_planned(seq, &plan)?;
    inverse_planned(&apply_filter(&spectrum, filter)?, &plan)
}

/// Token-0 weights of the filtering operator: `filtered[0][j] = sum_i w[i] * seq[i][j]`.
///
/// The operator `IDCT ∘ mask ∘ DCT` equals `C^T D M C / n` with `D = diag(1, 2, .., 2)`,
/// which is symmetric, so its row 0 is the filtered unit impulse at token 0.
pub fn class_token_weights<A: Accumulator>(filter: &BandFilter) -> Vec<A> {
    let n = filter.n;
    let mut impulse = vec![A::zero(); n];
    impulse[0] = A::one();
    let plan = DctPlan::<A>::new(n, TransformKind::Auto);
    let mut spectrum = vec![A::zero(); n];
    let mut scratch = Vec::new();
    plan.forward(&impulse, &mut spectrum, &mut scratch);
    for &m in filter.masked() {
        spectrum[m] = A::zero();
    }
    let mut weights = vec![A::zero(); n];
    plan.inverse(&spectrum, &mut weights, &mut scratch);
    weights
}

/// Sum of squares of a channel recovered from its spectrum:
/// `(f0^2 + 2 * sum_{m>=1} f_m^2) / n`.
pub fn spectral_energy<A: Float + FromPrimitive>(row: &[A]) -> A {
    let n = A::from_usize(row.len()).expect("length fits");
    let two = A::one() + A::one();
    let tail = row.iter().skip(1).fold(A::zero(), |s, &f| s + f * f);
    (row[0] * row[0] + two * tail) / n
}
