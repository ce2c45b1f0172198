use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::backends::Region;

/// `image_id` used for per-region mean rows.
pub const AGGREGATE_IMAGE_ID: &str = "ALL";
/// `region` used for the all-images mean row.
pub const TOTAL_REGION: &str = "total";

/// One row of the score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub region: String,
    pub model: String,
    pub cnr_percent: f64,
    pub clip_score: f64,
}

impl ScoreRow {
    pub fn is_aggregate(&self) -> bool {
        self.image_id == AGGREGATE_IMAGE_ID
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-(model, region) means followed by a per-model total, models in order
/// of first appearance and regions in their canonical order.
pub fn aggregate_scores(rows: &[ScoreRow]) -> Vec<ScoreRow> {
    let mut models: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut out = Vec::new();
    for model in models {
        let of_model: Vec<&ScoreRow> = rows.iter().filter(|r| !r.is_aggregate() && r.model == model).collect();
        for region in Region::ALL {
            let subset: Vec<&&ScoreRow> = of_model.iter().filter(|r| r.region == region.key()).collect();
            if subset.is_empty() {
                continue;
            }
            out.push(ScoreRow {
                image_id: AGGREGATE_IMAGE_ID.into(),
                region: region.key().into(),
                model: model.into(),
                cnr_percent: mean(subset.iter().map(|r| r.cnr_percent)),
                clip_score: mean(subset.iter().map(|r| r.clip_score)),
            });
        }
        out.push(ScoreRow {
            image_id: AGGREGATE_IMAGE_ID.into(),
            region: TOTAL_REGION.into(),
            model: model.into(),
            cnr_percent: mean(of_model.iter().map(|r| r.cnr_percent)),
            clip_score: mean(of_model.iter().map(|r| r.clip_score)),
        });
    }
    out
}

/// Writes per-image rows followed by their aggregate rows.
pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        w.serialize(r)?;
    }
    for r in aggregate_scores(rows) {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| MetricError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>, MetricError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ScoreRow>, _>>()?)
}
