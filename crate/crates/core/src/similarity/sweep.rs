//! Per-frequency masking sweep: mask one DCT index at a time and score the
//! filtered class tokens against a text embedding.

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use super::{cosine_similarity, mean_std, projected_similarity, weighted_token_sum, Embedding, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{class_token_weights, BandFilter, EmbeddingSequence};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Masked frequency index; `None` for the unmasked baseline.
    pub frequency: Option<usize>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
}

impl SweepRow {
    pub fn is_baseline(&self) -> bool {
        self.frequency.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub n: usize,
    pub d: usize,
    pub sequences: usize,
    pub projected: bool,
    /// One row per frequency in increasing order, then the baseline row.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn baseline(&self) -> &SweepRow {
        self.rows.last().expect("report always has a baseline row")
    }

    pub fn frequency_rows(&self) -> &[SweepRow] {
        &self.rows[..self.rows.len() - 1]
    }
}

fn check_inputs<T: Scalar>(
    seqs: &[EmbeddingSequence<T>],
    text_emb: &Embedding<T>,
    proj: Option<&ProjectionMatrix<T>>,
) -> Result<(usize, usize)> {
    let first = seqs.first().ok_or_else(|| Error::EmptyInput("no sequences to sweep".into()))?;
    let (n, d) = (first.n(), first.d());
    if let Some((k, s)) = seqs.iter().enumerate().find(|(_, s)| (s.n(), s.d()) != (n, d)) {
        return Err(Error::Shape(format!("sequence {k} is {}x{}, sequence 0 is {n}x{d}", s.n(), s.d())));
    }
    let want = proj.map_or(d, |p| p.in_dim());
    if d != want || text_emb.dim() != want {
        return Err(Error::Shape(format!(
            "sequence channels ({d}) and text dim ({}) must both equal {want}",
            text_emb.dim()
        )));
    }
    Ok((n, d))
}

/// Scores every sequence under one filter; degenerate vectors are skipped.
pub fn score_filter<T: Scalar>(
    seqs: &[EmbeddingSequence<T>],
    text_emb: &Embedding<T>,
    proj: Option<&ProjectionMatrix<T>>,
    filter: &BandFilter,
) -> Result<SweepRow> {
    let (n, _) = check_inputs(seqs, text_emb, proj)?;
    if filter.n() != n {
        return Err(Error::Shape(format!("filter is for n = {}, sequences have n = {n}", filter.n())));
    }
    let weights = class_token_weights::<T::Acc>(filter);
    score_with_weights(seqs, text_emb, proj, &weights, None)
}

fn score_with_weights<T: Scalar>(
    seqs: &[EmbeddingSequence<T>],
    text_emb: &Embedding<T>,
    proj: Option<&ProjectionMatrix<T>>,
    weights: &[T::Acc],
    frequency: Option<usize>,
) -> Result<SweepRow> {
    let mut scores = Vec::with_capacity(seqs.len());
    let mut skipped = 0;
    for seq in seqs {
        let z = weighted_token_sum(seq, weights);
        let score = match proj {
            Some(p) => projected_similarity(&z, text_emb, p),
            None => cosine_similarity(&z, text_emb),
        };
        match score {
            Ok(s) => scores.push(s.to_f64().unwrap_or(f64::NAN)),
            Err(e) if e.class() == crate::error::ErrorClass::Degenerate => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let stats = mean_std(&scores);
    Ok(SweepRow { frequency, mean: stats.map(|s| s.mean), std: stats.map(|s| s.std), scored: scores.len(), skipped })
}

/// Masks each frequency `0..n` individually, then appends the unmasked baseline.
pub fn frequency_sweep<T: Scalar>(
    seqs: &[EmbeddingSequence<T>],
    text_emb: &Embedding<T>,
    proj: Option<&ProjectionMatrix<T>>,
) -> Result<SweepReport> {
    let (n, d) = check_inputs(seqs, text_emb, proj)?;
    let filters: Vec<Option<usize>> = (0..n).map(Some).chain([None]).collect();
    let rows = filters
        .par_iter()
        .map(|&m| {
            let filter = match m {
                Some(m) => BandFilter::single(n, m)?,
                None => BandFilter::identity(n),
            };
            let weights = class_token_weights::<T::Acc>(&filter);
            score_with_weights(seqs, text_emb, proj, &weights, m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { n, d, sequences: seqs.len(), projected: proj.is_some(), rows })
}
