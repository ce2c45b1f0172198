use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backends::ImageRef;

/// One manifest line: an image plus an optional precomputed caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    #[serde(flatten)]
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_caption: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    /// Parses JSONL, rejecting duplicate image ids and rows without a region.
    pub fn from_jsonl_str(text: &str) -> Result<Self, PipelineError> {
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow = serde_json::from_str(line)
                .map_err(|e| PipelineError::Manifest(format!("line {}: {e}", i + 1)))?;
            if !seen.insert(row.image.image_id.clone()) {
                return Err(PipelineError::Manifest(format!("line {}: duplicate image_id {}", i + 1, row.image.image_id)));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        Self::from_jsonl_str(&text)
    }

    pub fn images(&self) -> Vec<ImageRef> {
        self.rows.iter().map(|r| r.image.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
