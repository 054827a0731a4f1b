//! Similarity scores and losses over filtered class tokens.

mod gradient;
mod sweep;

pub use gradient::{directional_loss_and_gradient, directional_loss_gradient, LossAndGradient};
pub use sweep::{frequency_sweep, score_filter, SweepReport, SweepRow};

use num_traits::{Float, FromPrimitive, One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{class_token_weights, BandFilter, EmbeddingSequence};

/// Norms at or below this are treated as zero vectors.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Default patch-rejection threshold.
pub const DEFAULT_TAU: f64 = 0.7;

/// A single embedding vector (an image class token or a text embedding).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDimension("embedding must have dim >= 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { location: format!("embedding component {pos}") });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T::Acc {
        norm(&self.values)
    }

    /// `self - other`, computed in the accumulator type.
    pub fn sub(&self, other: &Self) -> Result<Vec<T::Acc>> {
        same_dim(self.dim(), other.dim())?;
        Ok(self.values.iter().zip(&other.values).map(|(&a, &b)| a.widen() - b.widen()).collect())
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("embedding dims differ: {a} vs {b}")));
    }
    Ok(())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T::Acc {
    a.iter().zip(b).fold(T::Acc::zero(), |s, (&x, &y)| s + x.widen() * y.widen())
}

fn norm<T: Scalar>(a: &[T]) -> T::Acc {
    dot(a, a).sqrt()
}

fn degenerate_norm<A: Float + FromPrimitive>() -> A {
    A::from_f64(DEGENERATE_NORM).expect("representable")
}

/// Cosine of two raw vectors, clamped to `[-1, 1]`.
fn cosine_raw<T: Scalar>(a: &[T], b: &[T]) -> Result<T::Acc> {
    same_dim(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    let eps = degenerate_norm::<T::Acc>();
    if na <= eps || nb <= eps {
        return Err(Error::DegenerateVector(format!(
            "cosine operand has norm {:.3e}",
            na.min(nb).to_f64().unwrap_or(f64::NAN)
        )));
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::Acc::one()).min(T::Acc::one()))
}

pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T::Acc> {
    cosine_raw(&a.values, &b.values)
}

/// Class token of the band-stop filtered sequence, `v̂_0`.
pub fn filtered_class_token<T: Scalar>(seq: &EmbeddingSequence<T>, filter: &BandFilter) -> Result<Embedding<T>> {
    if seq.n() != filter.n() {
        return Err(Error::Shape(format!("filter is for n = {}, sequence has n = {}", filter.n(), seq.n())));
    }
    let weights = class_token_weights::<T::Acc>(filter);
    Ok(weighted_token_sum(seq, &weights))
}

pub(crate) fn weighted_token_sum<T: Scalar>(seq: &EmbeddingSequence<T>, weights: &[T::Acc]) -> Embedding<T> {
    let mut acc = vec![T::Acc::zero(); seq.d()];
    for (token, &w) in seq.tokens().zip(weights) {
        if w.is_zero() {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(token) {
            *a = *a + w * x.widen();
        }
    }
    Embedding { values: acc.into_iter().map(T::narrow).collect() }
}

/// The four embeddings entering the directional loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalLossInputs<T> {
    pub stylized_image_emb: Embedding<T>,
    pub content_image_emb: Embedding<T>,
    pub style_text_emb: Embedding<T>,
    pub source_text_emb: Embedding<T>,
}

impl<T: Scalar> DirectionalLossInputs<T> {
    pub fn new(
        stylized: Embedding<T>,
        content: Embedding<T>,
        style: Embedding<T>,
        source: Embedding<T>,
    ) -> Result<Self> {
        let dim = stylized.dim();
        for e in [&content, &style, &source] {
            same_dim(dim, e.dim())?;
        }
        Ok(Self {
            stylized_image_emb: stylized,
            content_image_emb: content,
            style_text_emb: style,
            source_text_emb: source,
        })
    }

    pub fn image_direction(&self) -> Result<Vec<T::Acc>> {
        self.stylized_image_emb.sub(&self.content_image_emb)
    }

    pub fn text_direction(&self) -> Result<Vec<T::Acc>> {
        self.style_text_emb.sub(&self.source_text_emb)
    }
}

/// Checks a direction vector and returns its norm.
pub(crate) fn direction_norm<A: Float + FromPrimitive>(v: &[A], what: &str) -> Result<A> {
    let n = v.iter().fold(A::zero(), |s, &x| s + x * x).sqrt();
    if n <= degenerate_norm::<A>() {
        return Err(Error::DegenerateDirection(format!("{what} has norm {:.3e}", n.to_f64().unwrap_or(f64::NAN))));
    }
    Ok(n)
}

pub(crate) fn directional_from_parts<A: Float + FromPrimitive>(image_dir: &[A], text_dir: &[A]) -> Result<A> {
    let ni = direction_norm(image_dir, "image direction (stylized - content)")?;
    let nt = direction_norm(text_dir, "text direction (style - source)")?;
    let d = image_dir.iter().zip(text_dir).fold(A::zero(), |s, (&a, &b)| s + a * b);
    let c = (d / (ni * nt)).max(-A::one()).min(A::one());
    Ok(A::one() - c)
}

/// `1 - cos(ΔI, ΔT)` with `ΔI = stylized - content`, `ΔT = style - source`.
pub fn directional_loss<T: Scalar>(inputs: &DirectionalLossInputs<T>) -> Result<T::Acc> {
    directional_from_parts(&inputs.image_direction()?, &inputs.text_direction()?)
}

/// Patch-level loss settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLossConfig {
    pub threshold: f64,
    pub filter: BandFilter,
}

impl PatchLossConfig {
    pub fn new(filter: BandFilter) -> Self {
        Self { threshold: DEFAULT_TAU, filter }
    }

    pub fn with_threshold(mut self, tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::NonFinite { location: "patch-rejection threshold".into() });
        }
        self.threshold = tau;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchOutcome {
    /// `None` when the patch direction was degenerate.
    pub loss: Option<f64>,
    pub rejected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchLoss {
    pub total: f64,
    pub patches: Vec<PatchOutcome>,
}

impl PatchLoss {
    pub fn rejected(&self) -> Vec<bool> {
        self.patches.iter().map(|p| p.rejected).collect()
    }

    pub fn per_patch(&self) -> Vec<Option<f64>> {
        self.patches.iter().map(|p| p.loss).collect()
    }
}

/// Applies the rejection rule to precomputed per-patch losses.
///
/// A patch is rejected when `loss <= tau` and then contributes 0. The total
/// divides by the patch count, rejected and degenerate patches included.
pub fn threshold_patch_losses(losses: &[Result<f64>], tau: f64) -> PatchLoss {
    let patches: Vec<PatchOutcome> = losses
        .iter()
        .map(|l| match l {
            Ok(loss) => PatchOutcome { loss: Some(*loss), rejected: *loss <= tau, degenerate: None },
            Err(e) => PatchOutcome { loss: None, rejected: false, degenerate: Some(e.to_string()) },
        })
        .collect();
    let sum: f64 = patches.iter().filter(|p| !p.rejected).filter_map(|p| p.loss).fold(0.0, |a, b| a + b);
    let total = if patches.is_empty() { 0.0 } else { sum / patches.len() as f64 };
    PatchLoss { total, patches }
}

/// Patch-level directional loss with rejection threshold.
///
/// Each patch's image direction is `v̂_0(stylized patch) - v̂_0(content patch)`.
/// Degenerate image directions are recorded per patch; a degenerate text
/// direction fails the whole batch.
pub fn patch_directional_loss<T: Scalar>(
    patches: &[EmbeddingSequence<T>],
    content_patches: &[EmbeddingSequence<T>],
    style_text_emb: &Embedding<T>,
    source_text_emb: &Embedding<T>,
    cfg: &PatchLossConfig,
) -> Result<PatchLoss> {
    if patches.is_empty() {
        return Err(Error::EmptyInput("no patches".into()));
    }
    if patches.len() != content_patches.len() {
        return Err(Error::Shape(format!(
            "{} stylized patches but {} content patches",
            patches.len(),
            content_patches.len()
        )));
    }
    let text_dir: Vec<f64> =
        style_text_emb.sub(source_text_emb)?.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    direction_norm(&text_dir, "text direction (style - source)")?;
    for (k, seq) in patches.iter().chain(content_patches).enumerate() {
        if seq.n() != cfg.filter.n() || seq.d() != style_text_emb.dim() {
            return Err(Error::Shape(format!(
                "patch sequence {k} is {}x{}, expected n = {} and d = {}",
                seq.n(),
                seq.d(),
                cfg.filter.n(),
                style_text_emb.dim()
            )));
        }
    }
    let weights = class_token_weights::<T::Acc>(&cfg.filter);
    let losses: Vec<Result<f64>> = patches
        .par_iter()
        .zip(content_patches.par_iter())
        .map(|(stylized, content)| {
            let zs = weighted_token_sum(stylized, &weights);
            let zc = weighted_token_sum(content, &weights);
            let image_dir: Vec<f64> = zs.sub(&zc)?.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
            directional_from_parts(&image_dir, &text_dir)
        })
        .collect();
    Ok(threshold_patch_losses(&losses, cfg.threshold))
}

/// Row-major `out_dim x in_dim` linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    out_dim: usize,
    in_dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn new(out_dim: usize, in_dim: usize, data: Vec<T>) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::EmptyDimension(format!(
                "projection must have out_dim >= 1 and in_dim >= 1 (got {out_dim} x {in_dim})"
            )));
        }
        if data.len() != out_dim * in_dim {
            return Err(Error::Shape(format!(
                "expected {} entries for {out_dim} x {in_dim}, got {}",
                out_dim * in_dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("projection row {}, column {}", pos / in_dim, pos % in_dim),
            });
        }
        Ok(Self { out_dim, in_dim, data })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(dim, dim, (0..dim * dim).map(|k| if k % (dim + 1) == 0 { T::one() } else { T::zero() }).collect())
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.in_dim..(r + 1) * self.in_dim]
    }

    /// `P · v`, accumulated in `T::Acc`.
    pub fn apply(&self, v: &Embedding<T>) -> Result<Vec<T::Acc>> {
        if v.dim() != self.in_dim {
            return Err(Error::Shape(format!("projection expects dim {}, embedding has dim {}", self.in_dim, v.dim())));
        }
        Ok((0..self.out_dim).map(|r| dot(self.row(r), v.values())).collect())
    }
}

/// Cosine similarity after projecting both embeddings through `P`.
pub fn projected_similarity<T: Scalar>(
    image_emb: &Embedding<T>,
    text_emb: &Embedding<T>,
    proj: &ProjectionMatrix<T>,
) -> Result<T::Acc> {
    let a = proj.apply(image_emb)?;
    let b = proj.apply(text_emb)?;
    let (na, nb) = (acc_norm(&a), acc_norm(&b));
    let eps = degenerate_norm::<T::Acc>();
    if na <= eps || nb <= eps {
        return Err(Error::DegenerateVector("projected embedding is (numerically) zero".into()));
    }
    let d = a.iter().zip(&b).fold(T::Acc::zero(), |s, (&x, &y)| s + x * y);
    Ok((d / (na * nb)).max(-T::Acc::one()).min(T::Acc::one()))
}

fn acc_norm<A: Float>(v: &[A]) -> A {
    v.iter().fold(A::zero(), |s, &x| s + x * x).sqrt()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    Some(MeanStd { mean, std: var.sqrt(), count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::filter_sequence;

    fn emb(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn inputs(stylized: &[f64], content: &[f64], style: &[f64], source: &[f64]) -> DirectionalLossInputs<f64> {
        DirectionalLossInputs::new(emb(stylized), emb(content), emb(style), emb(source)).unwrap()
    }

    #[test]
    fn cosine_edge_values() {
        let v = emb(&[1.0, -2.0, 3.0]);
        let neg = emb(&[-1.0, 2.0, -3.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(matches!(cosine_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])), Err(Error::DegenerateVector(_))));
        assert!(matches!(cosine_similarity(&emb(&[1.0]), &emb(&[1.0, 0.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn directional_loss_edge_values() {
        let content = [0.5, 0.5, 0.5];
        let source = [1.0, 1.0, 0.0];
        // ΔI = (1, 2, 0), parallel ΔT = (2, 4, 0)
        assert!(
            directional_loss(&inputs(&[1.5, 2.5, 0.5], &content, &[3.0, 5.0, 0.0], &source)).unwrap().abs() < 1e-15
        );
        // anti-parallel
        let l = directional_loss(&inputs(&[1.5, 2.5, 0.5], &content, &[0.0, -1.0, 0.0], &source)).unwrap();
        assert!((l - 2.0).abs() < 1e-15);
        // orthogonal
        let l = directional_loss(&inputs(&[1.5, 0.5, 0.5], &content, &[1.0, 2.0, 0.0], &source)).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn directional_loss_degenerate() {
        let same = directional_loss(&inputs(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 1.0], &[1.0, 0.0]));
        assert!(matches!(same, Err(Error::DegenerateDirection(_))));
        let same_text = directional_loss(&inputs(&[1.0, 2.0], &[0.0, 2.0], &[1.0, 1.0], &[1.0, 1.0]));
        assert!(matches!(same_text, Err(Error::DegenerateDirection(_))));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let r = DirectionalLossInputs::new(emb(&[1.0]), emb(&[1.0, 2.0]), emb(&[1.0]), emb(&[1.0]));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn filtered_class_token_limits() {
        let seq = EmbeddingSequence::from_fn(5, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 1.0) + 0.25).unwrap();
        let raw = filtered_class_token(&seq, &BandFilter::identity(5)).unwrap();
        for (a, b) in raw.values().iter().zip(seq.class_token()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = filtered_class_token(&seq, &BandFilter::full(5)).unwrap();
        assert!(zero.values().iter().all(|v| v.abs() < 1e-12));
        let filter = BandFilter::new(5, [0, 3]).unwrap();
        let via_pipeline = filter_sequence(&seq, &filter).unwrap();
        let z = filtered_class_token(&seq, &filter).unwrap();
        for (a, b) in z.values().iter().zip(via_pipeline.class_token()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_rule_hand_example() {
        let out = threshold_patch_losses(&[Ok(0.5), Ok(1.0)], 0.7);
        assert_eq!(out.total, 0.5);
        assert_eq!(out.rejected(), vec![true, false]);
    }

    #[test]
    fn threshold_rule_extremes() {
        let all_low = threshold_patch_losses(&[Ok(0.1), Ok(0.7)], 0.7);
        assert_eq!(all_low.total, 0.0);
        assert!(all_low.rejected().iter().all(|&r| r));
        let unthresholded = threshold_patch_losses(&[Ok(0.25), Ok(0.75)], 0.0);
        assert_eq!(unthresholded.total, 0.5);
        assert!(unthresholded.rejected().iter().all(|&r| !r));
    }

    #[test]
    fn degenerate_patch_is_soft() {
        let n = 4;
        let d = 2;
        let base = EmbeddingSequence::from_fn(n, d, |i, j| (i + j) as f64).unwrap();
        let moved = EmbeddingSequence::from_fn(n, d, |i, j| (i + j) as f64 + if j == 0 { 1.0 } else { 0.0 }).unwrap();
        let cfg = PatchLossConfig::new(BandFilter::identity(n)).with_threshold(0.0).unwrap();
        let out = patch_directional_loss(
            &[moved.clone(), base.clone()],
            &[base.clone(), base.clone()],
            &emb(&[1.0, 0.0]),
            &emb(&[0.0, 0.0]),
            &cfg,
        )
        .unwrap();
        assert!(out.patches[0].loss.unwrap().abs() < 1e-12);
        assert!(out.patches[1].degenerate.is_some());
        assert_eq!(out.patches[1].loss, None);
        assert_eq!(out.total, 0.0);
    }

    #[test]
    fn patch_loss_errors() {
        let seq = EmbeddingSequence::from_fn(4, 2, |i, j| (i * j) as f64).unwrap();
        let cfg = PatchLossConfig::new(BandFilter::identity(4));
        let (s, p) = (emb(&[1.0, 0.0]), emb(&[0.0, 1.0]));
        assert!(matches!(patch_directional_loss(&[], &[], &s, &p, &cfg), Err(Error::EmptyInput(_))));
        assert!(matches!(patch_directional_loss(std::slice::from_ref(&seq), &[], &s, &p, &cfg), Err(Error::Shape(_))));
        assert!(matches!(
            patch_directional_loss(std::slice::from_ref(&seq), std::slice::from_ref(&seq), &s, &s, &cfg),
            Err(Error::DegenerateDirection(_))
        ));
        let cfg5 = PatchLossConfig::new(BandFilter::identity(5));
        assert!(matches!(
            patch_directional_loss(std::slice::from_ref(&seq), std::slice::from_ref(&seq), &s, &p, &cfg5),
            Err(Error::Shape(_))
        ));
        assert!(PatchLossConfig::new(BandFilter::identity(4)).with_threshold(f64::NAN).is_err());
    }

    #[test]
    fn projection_identity_and_zero() {
        let (a, b) = (emb(&[1.0, 2.0, -1.0]), emb(&[0.5, -1.0, 3.0]));
        let id = ProjectionMatrix::identity(3).unwrap();
        assert!((projected_similarity(&a, &b, &id).unwrap() - cosine_similarity(&a, &b).unwrap()).abs() < 1e-15);
        let zero = ProjectionMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(projected_similarity(&a, &b, &zero), Err(Error::DegenerateVector(_))));
        let wrong = ProjectionMatrix::<f64>::identity(2).unwrap();
        assert!(matches!(projected_similarity(&a, &b, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_std_population() {
        let s = mean_std(&[0.2, 0.4]).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert!((s.std - 0.1).abs() < 1e-15);
        assert!(mean_std(&[]).is_none());
    }
}
