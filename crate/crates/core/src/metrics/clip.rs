use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::backends::EmbeddingVector;

/// Default rescaling weight applied to the clamped cosine.
pub const CLIP_SCORE_WEIGHT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClipScore(pub f64);

pub fn clip_score(image: &EmbeddingVector, text: &EmbeddingVector) -> Result<ClipScore, MetricError> {
    clip_score_with(image, text, CLIP_SCORE_WEIGHT)
}

/// `weight * max(0, cos(image, text))`.
pub fn clip_score_with(image: &EmbeddingVector, text: &EmbeddingVector, weight: f64) -> Result<ClipScore, MetricError> {
    if image.dim() != text.dim() {
        return Err(MetricError::DimensionMismatch(image.dim(), text.dim()));
    }
    if image.norm() == 0.0 || text.norm() == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok(ClipScore(weight * image.cosine(text).max(0.0)))
}
