//! Configuration, manifests, batch runs and reports.

mod config;
mod manifest;
pub mod report;
mod run;

use thiserror::Error;

pub use config::{
    has_fatal, AblationConfig, BackendConfig, BackendKind, BackendStack, Diagnostic, RunConfig, Severity,
};
pub use manifest::{DatasetManifest, ManifestRow};
pub use run::{
    read_bundles, run, score_bundles, score_image, variant_label, write_bundles, RunOutputs, RunSummary, Variant,
    BUNDLES_FILE, REFERENCE_BUNDLES_FILE, REPORT_FILE, SCORES_FILE, SUMMARY_FILE,
};

use crate::backends::BackendError;
use crate::metrics::MetricError;
use crate::question_bank::QuestionError;
use crate::survey::SurveyError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration has fatal problems:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}
