//! Test-only oracles. Nothing here calls into the crate's transform code.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spectralclip::{EmbeddingSequence, Sequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sequence(rng: &mut impl Rng, n: usize, d: usize) -> Sequence {
    EmbeddingSequence::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal)).unwrap()
}

pub fn random_sequence32(rng: &mut impl Rng, n: usize, d: usize) -> EmbeddingSequence<f32> {
    EmbeddingSequence::from_fn(n, d, |_, _| rng.sample::<f32, _>(StandardNormal)).unwrap()
}

pub fn random_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `cos(pi m (i + 1/2) / n)` evaluated literally.
pub fn basis(m: usize, i: usize, n: usize) -> f64 {
    (PI * m as f64 * (i as f64 + 0.5) / n as f64).cos()
}

/// Cosine table `[m][i]` for the direct summation.
pub fn basis_table(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|m| (0..n).map(|i| basis(m, i, n)).collect()).collect()
}

/// Direct O(n^2) DCT-II of every channel; returns `[channel][frequency]`.
pub fn oracle_dct(data: &[f64], n: usize, d: usize, table: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; d];
    for (m, row) in table.iter().enumerate() {
        for (j, spectrum) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, c) in row.iter().enumerate() {
                s += data[i * d + j] * c;
            }
            spectrum[m] = s;
        }
    }
    out
}

/// Direct inverse: `x_i = (f_0 + 2 sum_{m>=1} f_m cos(..)) / n`; returns token-major data.
pub fn oracle_idct(spectrum: &[Vec<f64>], n: usize, table: &[Vec<f64>]) -> Vec<f64> {
    let d = spectrum.len();
    let mut out = vec![0.0; n * d];
    for (j, f) in spectrum.iter().enumerate() {
        for i in 0..n {
            let mut s = f[0];
            for m in 1..n {
                s += 2.0 * f[m] * table[m][i];
            }
            out[i * d + j] = s / n as f64;
        }
    }
    out
}

/// Filters via the oracle transforms and returns the token-major result.
pub fn oracle_filter(seq: &Sequence, masked: &[usize]) -> Vec<f64> {
    let (n, d) = (seq.n(), seq.d());
    let table = basis_table(n);
    let mut spectrum = oracle_dct(seq.data(), n, d, &table);
    for row in &mut spectrum {
        for &m in masked {
            row[m] = 0.0;
        }
    }
    oracle_idct(&spectrum, n, &table)
}

/// Sequence with every channel `j` equal to `amp[j] * cos(pi m0 (i + 1/2) / n)`.
pub fn pure_cosine(n: usize, m0: usize, amp: &[f64]) -> Sequence {
    EmbeddingSequence::from_fn(n, amp.len(), |i, j| amp[j] * basis(m0, i, n)).unwrap()
}

/// `max|a - b| / max|b|`, with the denominator floored at `floor`.
pub fn sup_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    num / den
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2(a) * l2(b))
}

/// Directional loss of the oracle-filtered class token: `1 - cos(v̂0 - content, style - source)`.
pub fn oracle_directional_loss(seq: &Sequence, masked: &[usize], content: &[f64], text_dir: &[f64]) -> f64 {
    let filtered = oracle_filter(seq, masked);
    let d = seq.d();
    let image_dir: Vec<f64> = (0..d).map(|j| filtered[j] - content[j]).collect();
    1.0 - cosine(&image_dir, text_dir)
}

/// Central differences of `f` with respect to every entry of `seq`.
pub fn central_difference(seq: &Sequence, step: f64, f: impl Fn(&Sequence) -> f64) -> Vec<f64> {
    let (n, d) = (seq.n(), seq.d());
    let base = seq.data().to_vec();
    let mut grad = vec![0.0; n * d];
    for k in 0..n * d {
        let mut plus = base.clone();
        plus[k] += step;
        let mut minus = base.clone();
        minus[k] -= step;
        let fp = f(&EmbeddingSequence::new(n, d, plus).unwrap());
        let fm = f(&EmbeddingSequence::new(n, d, minus).unwrap());
        grad[k] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Gram-Schmidt: `v` with its components along each of `basis` removed, normalized.
pub fn orthonormalize(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    for b in basis {
        let c = dot(&v, b) / dot(b, b);
        for (x, y) in v.iter_mut().zip(b.iter()) {
            *x -= c * y;
        }
    }
    let n = l2(&v);
    v.iter().map(|x| x / n).collect()
}
