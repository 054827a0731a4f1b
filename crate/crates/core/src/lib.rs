//! Band-stop spectral filtering of token-embedding sequences.
//!
//! A vision transformer's token sequence is transformed channel-by-channel with
//! an un-normalized DCT-II, selected frequency bands are zeroed, and the result
//! is transformed back. The filtered class token then stands in for the usual
//! image embedding in cosine, directional, patch-thresholded and projected
//! similarity scores. Analytic gradients of the directional loss with respect to
//! the token matrix let an external optimizer consume the loss.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); reductions
//! accumulate in `f64`. The aliases below fix the precision for common use.

pub mod bands;
pub mod cli;
pub mod error;
pub mod io;
pub mod report;
pub mod scalar;
pub mod similarity;
pub mod spectral;

pub use bands::{default_scheme, parse_band_spec, period_of, resolve_filter, BandCombination, BandScheme, Period};
pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use similarity::{
    cosine_similarity, directional_loss, directional_loss_gradient, filtered_class_token, frequency_sweep,
    patch_directional_loss, projected_similarity, DirectionalLossInputs, Embedding, PatchLossConfig, ProjectionMatrix,
};
pub use spectral::{
    apply_filter, dct_forward, dct_inverse, filter_sequence, BandFilter, EmbeddingSequence, SpectralMatrix,
    TransformKind,
};

/// Double-precision sequence.
pub type Sequence = EmbeddingSequence<f64>;
/// Single-precision sequence, the on-disk precision.
pub type Sequence32 = EmbeddingSequence<f32>;
pub type Spectrum = SpectralMatrix<f64>;
pub type Spectrum32 = SpectralMatrix<f32>;
pub type Vector = Embedding<f64>;
pub type Vector32 = Embedding<f32>;
pub type Projection = ProjectionMatrix<f64>;
pub type Projection32 = ProjectionMatrix<f32>;
