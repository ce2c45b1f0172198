use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{has_fatal, report, DatasetManifest, ManifestRow, PipelineError, RunConfig};
use crate::backends::{Backends, ImageRef};
use crate::captioning::{run_image, AblationFlag, CaptionBundle, CaptionSettings};
use crate::metrics::{clip_score_with, cnr, write_scores_csv, CultureLexicon, ScoreRow};
use crate::question_bank::QuestionBank;

pub const BUNDLES_FILE: &str = "bundles.jsonl";
/// Unablated bundles, written next to an ablation run's bundles.
pub const REFERENCE_BUNDLES_FILE: &str = "bundles.reference.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.md";
/// Call counts and failure tally; unlike the other outputs it differs
/// between cold and warm runs.
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Share of failed images above which a run counts as failed.
const FAILURE_BUDGET: f64 = 0.10;

/// Model label of captions produced under `flags`.
pub fn variant_label(model_label: &str, flags: &BTreeSet<AblationFlag>) -> String {
    if flags.is_empty() {
        return model_label.to_string();
    }
    let parts: Vec<&str> = flags
        .iter()
        .map(|f| match f {
            AblationFlag::NoCaptionPrompt => "caption prompt",
            AblationFlag::NoExtraction => "extraction",
        })
        .collect();
    format!("{model_label} w/o {}", parts.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub settings: CaptionSettings,
}

fn variants(config: &RunConfig) -> Vec<Variant> {
    let requested = config.caption_settings();
    let mut out = Vec::new();
    if !requested.flags.is_empty() {
        let reference = CaptionSettings { flags: BTreeSet::new(), ..requested.clone() };
        out.push(Variant { label: config.model_label.clone(), settings: reference });
    }
    out.push(Variant { label: variant_label(&config.model_label, &requested.flags), settings: requested });
    out
}

/// Baseline and candidate caption scores for one image. `captions` pairs a
/// model label with its caption.
pub fn score_image(
    image: &ImageRef,
    baseline_label: &str,
    baseline: &str,
    captions: &[(String, String)],
    backends: &Backends,
    lexicon: &CultureLexicon,
    clip_weight: f64,
) -> Result<Vec<ScoreRow>, String> {
    let image_vec = backends.embed_image(image).map_err(|e| format!("embed_image: {e}"))?;
    let mut labelled = vec![(baseline_label.to_string(), baseline.to_string())];
    labelled.extend(captions.iter().cloned());
    let texts: Vec<String> = labelled.iter().map(|(_, c)| c.clone()).collect();
    let vectors = backends.embed_text(&texts).map_err(|e| format!("embed_text: {e}"))?;
    labelled
        .into_iter()
        .zip(vectors)
        .map(|((model, caption), vec)| {
            let rate = cnr(&caption, lexicon).map_err(|e| format!("cnr of {model}: {e}"))?;
            let clip = clip_score_with(&image_vec, &vec, clip_weight).map_err(|e| format!("clip of {model}: {e}"))?;
            Ok(ScoreRow {
                image_id: image.image_id.clone(),
                region: image.region.key().to_string(),
                model,
                cnr_percent: rate.rate_percent,
                clip_score: clip.0,
            })
        })
        .collect()
}

/// Scores existing bundles: one baseline row and one candidate row per
/// bundle, labelled by the bundle's ablation flags. Bundles without a
/// caption are skipped with a message.
pub fn score_bundles(
    bundles: &[CaptionBundle],
    backends: &Backends,
    lexicon: &CultureLexicon,
    model_label: &str,
    baseline_label: &str,
    clip_weight: f64,
) -> (Vec<ScoreRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for b in bundles {
        if b.baseline_caption.is_empty() || b.final_caption.is_empty() {
            problems.push(format!("{}: no caption to score", b.image.image_id));
            continue;
        }
        let label = variant_label(model_label, &b.ablation_flags);
        match score_image(
            &b.image,
            baseline_label,
            &b.baseline_caption,
            &[(label, b.final_caption.clone())],
            backends,
            lexicon,
            clip_weight,
        ) {
            Ok(r) => rows.extend(r),
            Err(e) => problems.push(format!("{}: {e}", b.image.image_id)),
        }
    }
    (rows, problems)
}

struct ImageResult {
    bundles: Vec<CaptionBundle>,
    scores: Vec<ScoreRow>,
    score_error: Option<String>,
}

impl ImageResult {
    fn failed(&self) -> bool {
        self.score_error.is_some() || self.bundles.iter().any(CaptionBundle::failed)
    }
}

fn process(
    row: &ManifestRow,
    bank: &QuestionBank,
    lexicon: &CultureLexicon,
    backends: &Backends,
    variants: &[Variant],
    config: &RunConfig,
) -> ImageResult {
    let baseline = match &row.baseline_caption {
        Some(c) if !c.trim().is_empty() => Some(c.clone()),
        _ => backends.caption(&row.image).ok(),
    };
    let bundles: Vec<CaptionBundle> = variants
        .iter()
        .map(|v| run_image(&row.image, baseline.as_deref(), bank, backends, &v.settings))
        .collect();
    let (scores, score_error) = match baseline {
        Some(base) => {
            let captions: Vec<(String, String)> =
                variants.iter().zip(&bundles).map(|(v, b)| (v.label.clone(), b.final_caption.clone())).collect();
            match score_image(&row.image, &config.baseline_label, &base, &captions, backends, lexicon, config.clip_weight) {
                Ok(s) => (s, None),
                Err(e) => (Vec::new(), Some(e)),
            }
        }
        None => (Vec::new(), Some("no baseline caption".to_string())),
    };
    if let Some(e) = &score_error {
        warn!("{}: scoring failed: {e}", row.image.image_id);
    }
    ImageResult { bundles, scores, score_error }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub images: usize,
    pub failed: usize,
    pub fallbacks: usize,
    /// Calls that reached the backend, i.e. cache misses.
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub variants: Vec<String>,
    pub failed_images: Vec<String>,
}

impl RunSummary {
    pub fn failure_ratio(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.failed as f64 / self.images as f64
        }
    }

    /// More than 10% of images failed.
    pub fn over_failure_budget(&self) -> bool {
        self.failure_ratio() > FAILURE_BUDGET
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub dir: PathBuf,
}

impl RunOutputs {
    pub fn bundles(&self) -> PathBuf {
        self.dir.join(BUNDLES_FILE)
    }

    pub fn reference_bundles(&self) -> PathBuf {
        self.dir.join(REFERENCE_BUNDLES_FILE)
    }

    pub fn scores(&self) -> PathBuf {
        self.dir.join(SCORES_FILE)
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join(REPORT_FILE)
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join(SUMMARY_FILE)
    }
}

pub fn write_bundles(path: &Path, bundles: &[CaptionBundle]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for b in bundles {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_bundles(path: &Path) -> Result<Vec<CaptionBundle>, PipelineError> {
    let io = |source| PipelineError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Runs every manifest image through the pipeline on a pool of
/// `config.workers` threads and writes bundles, scores, a report and a
/// summary to `out_dir`. Output rows follow manifest order.
///
/// With ablation flags set, the unablated pipeline also runs so that the
/// scores and report can compare both; its bundles go to
/// [`REFERENCE_BUNDLES_FILE`].
pub fn run(config: &RunConfig, manifest: &DatasetManifest, out_dir: &Path) -> Result<RunSummary, PipelineError> {
    let diagnostics = config.validate();
    for d in &diagnostics {
        warn!("{d}");
    }
    if has_fatal(&diagnostics) {
        return Err(PipelineError::Invalid(diagnostics));
    }
    let bank = config.load_bank()?;
    let lexicon = config.load_lexicon()?;
    let stack = config.backend_stack()?;
    let variants = variants(config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let results: Vec<ImageResult> = pool.install(|| {
        manifest
            .rows
            .par_iter()
            .map(|row| process(row, &bank, &lexicon, &stack.backends, &variants, config))
            .collect()
    });

    let primary = variants.len() - 1;
    let bundles: Vec<CaptionBundle> = results.iter().map(|r| r.bundles[primary].clone()).collect();
    let scores: Vec<ScoreRow> = results.iter().flat_map(|r| r.scores.iter().cloned()).collect();
    let failed_images: Vec<String> =
        results.iter().filter(|r| r.failed()).map(|r| r.bundles[primary].image.image_id.clone()).collect();

    let out = RunOutputs { dir: out_dir.to_path_buf() };
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.display().to_string(), source })?;
    write_bundles(&out.bundles(), &bundles)?;
    if primary > 0 {
        let reference: Vec<CaptionBundle> = results.iter().map(|r| r.bundles[0].clone()).collect();
        write_bundles(&out.reference_bundles(), &reference)?;
    }
    write_scores_csv(&out.scores(), &scores)?;
    let markdown = report::render_run_report(&bundles, &scores);
    std::fs::write(out.report(), markdown)
        .map_err(|source| PipelineError::Io { path: out.report().display().to_string(), source })?;

    let summary = RunSummary {
        images: manifest.len(),
        failed: failed_images.len(),
        fallbacks: bundles.iter().filter(|b| b.fallback).count(),
        backend_calls: stack.backend_calls(),
        cache_hits: stack.cache_hits(),
        variants: variants.into_iter().map(|v| v.label).collect(),
        failed_images,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(out.summary(), text)
        .map_err(|source| PipelineError::Io { path: out.summary().display().to_string(), source })?;
    info!(
        "{} images, {} failed, {} backend calls, {} cache hits",
        summary.images, summary.failed, summary.backend_calls, summary.cache_hits
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(variant_label("CIC", &BTreeSet::new()), "CIC");
        assert_eq!(variant_label("CIC", &BTreeSet::from([AblationFlag::NoCaptionPrompt])), "CIC w/o caption prompt");
        assert_eq!(
            variant_label("CIC", &BTreeSet::from([AblationFlag::NoExtraction, AblationFlag::NoCaptionPrompt])),
            "CIC w/o caption prompt, extraction"
        );
    }

    #[test]
    fn failure_budget() {
        let mut s = RunSummary {
            images: 10,
            failed: 1,
            fallbacks: 0,
            backend_calls: 0,
            cache_hits: 0,
            variants: vec![],
            failed_images: vec![],
        };
        assert!(!s.over_failure_budget());
        s.failed = 2;
        assert!(s.over_failure_budget());
        s.images = 0;
        s.failed = 0;
        assert!(!s.over_failure_budget());
    }
}
