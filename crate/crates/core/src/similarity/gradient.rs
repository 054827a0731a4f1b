//! Analytic gradient of the filtered directional loss with respect to the
//! stylized image's token matrix.
//!
//! The filtered class token is linear in the tokens, `ẑ_j = Σ_i w_i x_ij`, so
//! `∂L/∂x_ij = w_i · ∂L/∂ẑ_j`. With `u = ẑ - content` and `t = style - source`,
//! `∂(1 - cos(u, t))/∂u = cos · u/|u|² - t/(|u||t|)`.

use num_traits::{Float, One, ToPrimitive, Zero};

use super::{direction_norm, weighted_token_sum, DirectionalLossInputs, Embedding};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{class_token_weights, BandFilter, EmbeddingSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGradient<T> {
    pub loss: f64,
    /// `n x d`, same layout as the input sequence.
    pub gradient: EmbeddingSequence<T>,
}

/// Loss and gradient computed from the stylized token sequence directly.
pub fn directional_loss_and_gradient<T: Scalar>(
    stylized_seq: &EmbeddingSequence<T>,
    content_image_emb: &Embedding<T>,
    style_text_emb: &Embedding<T>,
    source_text_emb: &Embedding<T>,
    filter: &BandFilter,
) -> Result<LossAndGradient<T>> {
    if stylized_seq.n() != filter.n() {
        return Err(Error::Shape(format!("filter is for n = {}, sequence has n = {}", filter.n(), stylized_seq.n())));
    }
    let weights = class_token_weights::<T::Acc>(filter);
    let stylized = weighted_token_sum(stylized_seq, &weights);
    let inputs = DirectionalLossInputs::new(
        stylized,
        content_image_emb.clone(),
        style_text_emb.clone(),
        source_text_emb.clone(),
    )?;
    gradient_from_weights(&inputs, stylized_seq, &weights)
}

/// Gradient of `directional_loss(inputs)` w.r.t. `stylized_seq`.
///
/// `inputs.stylized_image_emb` must be the filtered class token of
/// `stylized_seq` under `filter`.
pub fn directional_loss_gradient<T: Scalar>(
    inputs: &DirectionalLossInputs<T>,
    stylized_seq: &EmbeddingSequence<T>,
    filter: &BandFilter,
) -> Result<EmbeddingSequence<T>> {
    if stylized_seq.n() != filter.n() {
        return Err(Error::Shape(format!("filter is for n = {}, sequence has n = {}", filter.n(), stylized_seq.n())));
    }
    let weights = class_token_weights::<T::Acc>(filter);
    let expected = weighted_token_sum(stylized_seq, &weights);
    if expected.dim() != inputs.stylized_image_emb.dim() {
        return Err(Error::Shape(format!(
            "sequence has d = {}, embeddings have dim {}",
            expected.dim(),
            inputs.stylized_image_emb.dim()
        )));
    }
    let scale = expected.values().iter().map(|v| v.as_f64().abs()).fold(1.0, f64::max);
    let tol = 1e3 * f64::from(f32::EPSILON) * scale;
    let mismatch = expected
        .values()
        .iter()
        .zip(inputs.stylized_image_emb.values())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .fold(0.0, f64::max);
    if mismatch > tol {
        return Err(Error::Precondition(format!(
            "stylized embedding differs from the filtered class token of the sequence by {mismatch:.3e}"
        )));
    }
    Ok(gradient_from_weights(inputs, stylized_seq, &weights)?.gradient)
}

fn gradient_from_weights<T: Scalar>(
    inputs: &DirectionalLossInputs<T>,
    stylized_seq: &EmbeddingSequence<T>,
    weights: &[T::Acc],
) -> Result<LossAndGradient<T>> {
    let u = inputs.image_direction()?;
    let t = inputs.text_direction()?;
    let nu = direction_norm(&u, "image direction (stylized - content)")?;
    let nt = direction_norm(&t, "text direction (style - source)")?;
    let cos = u.iter().zip(&t).fold(T::Acc::zero(), |s, (&a, &b)| s + a * b) / (nu * nt);
    let cos_clamped = cos.max(-T::Acc::one()).min(T::Acc::one());
    let loss = (T::Acc::one() - cos_clamped).to_f64().unwrap_or(f64::NAN);

    let dloss_dz: Vec<T::Acc> = u.iter().zip(&t).map(|(&ui, &ti)| cos * ui / (nu * nu) - ti / (nu * nt)).collect();

    let (n, d) = (stylized_seq.n(), stylized_seq.d());
    let mut data = Vec::with_capacity(n * d);
    for &w in weights {
        data.extend(dloss_dz.iter().map(|&g| T::narrow(w * g)));
    }
    Ok(LossAndGradient { loss, gradient: EmbeddingSequence::new(n, d, data)? })
}
