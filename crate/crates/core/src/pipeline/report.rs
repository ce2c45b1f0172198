//! Markdown reports. Every function here is pure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::backends::Region;
use crate::captioning::CaptionBundle;
use crate::metrics::{aggregate_scores, MatchRateReport, MatchRateRow, PreferenceRow, RegionRanking, ScoreRow, TOTAL_REGION};
use crate::question_bank::CulturalCategory;
use crate::survey::{DemographicTally, Ingestion};

fn header(cells: &[&str]) -> String {
    let mut s = format!("| {} |\n", cells.join(" | "));
    s.push('|');
    for _ in cells {
        s.push_str(" --- |");
    }
    s.push('\n');
    s
}

fn row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn region_columns() -> Vec<&'static str> {
    let mut cols = vec!["Model"];
    cols.extend(Region::ALL.iter().map(|r| r.label()));
    cols.push("Total");
    cols
}

/// Model × region table of one score column, models in first-seen order.
fn score_table(aggregates: &[ScoreRow], value: impl Fn(&ScoreRow) -> f64, precision: usize) -> String {
    let mut out = header(&region_columns());
    let mut models: Vec<&str> = Vec::new();
    for r in aggregates {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    for model in models {
        let cell = |region: &str| {
            aggregates
                .iter()
                .find(|r| r.model == model && r.region == region)
                .map_or("-".to_string(), |r| format!("{:.precision$}", value(r)))
        };
        let mut cells = vec![model.to_string()];
        cells.extend(Region::ALL.iter().map(|r| cell(r.key())));
        cells.push(cell(TOTAL_REGION));
        out.push_str(&row(&cells));
    }
    out
}

fn category_counts(bundles: &[CaptionBundle]) -> String {
    let mut cols = vec!["Region", "Images"];
    cols.extend(CulturalCategory::ALL.iter().map(|c| c.label()));
    let mut out = header(&cols);
    for region in Region::ALL {
        let of_region: Vec<&CaptionBundle> = bundles.iter().filter(|b| b.image.region == region).collect();
        if of_region.is_empty() {
            continue;
        }
        let mut cells = vec![region.label().to_string(), of_region.len().to_string()];
        for c in CulturalCategory::ALL {
            cells.push(of_region.iter().filter(|b| b.active_categories.contains(&c)).count().to_string());
        }
        out.push_str(&row(&cells));
    }
    out
}

/// Run report: caption counts, CNR and CLIPScore by region and model, an
/// ablation comparison when more than one candidate model is present, and
/// detected categories per region.
pub fn render_run_report(bundles: &[CaptionBundle], scores: &[ScoreRow]) -> String {
    let aggregates = aggregate_scores(scores);
    let mut out = String::from("# Caption run report\n\n");
    let failed = bundles.iter().filter(|b| b.failed()).count();
    let fallbacks = bundles.iter().filter(|b| b.fallback).count();
    let exchanges: usize = bundles.iter().map(|b| b.exchanges.len()).sum();
    let coverage: Vec<f64> = bundles.iter().filter_map(|b| b.coverage).collect();
    let _ = writeln!(out, "- images: {}", bundles.len());
    let _ = writeln!(out, "- failed: {failed}");
    let _ = writeln!(out, "- kept baseline caption: {fallbacks}");
    let _ = writeln!(out, "- VQA exchanges: {exchanges}");
    if !coverage.is_empty() {
        let mean = coverage.iter().sum::<f64>() / coverage.len() as f64;
        let _ = writeln!(out, "- mean answer coverage: {mean:.3}");
    }

    out.push_str("\n## Culture Noise Rate (%)\n\n");
    out.push_str(&score_table(&aggregates, |r| r.cnr_percent, 2));
    out.push_str("\n## CLIPScore\n\n");
    out.push_str(&score_table(&aggregates, |r| r.clip_score, 4));

    let totals: Vec<&ScoreRow> = aggregates.iter().filter(|r| r.region == TOTAL_REGION).collect();
    if totals.len() > 2 {
        out.push_str("\n## Ablation\n\n");
        out.push_str(&header(&["Model", "CNR (%)", "CLIPScore"]));
        for r in totals {
            out.push_str(&row(&[r.model.clone(), format!("{:.2}", r.cnr_percent), format!("{:.4}", r.clip_score)]));
        }
    }

    out.push_str("\n## Detected cultural categories (images per region)\n\n");
    out.push_str(&category_counts(bundles));
    out
}

fn rate_cell(rate: Option<f64>) -> String {
    rate.map_or("-".to_string(), |r| format!("{:.1}", 100.0 * r))
}

fn match_row(name: &str, r: &MatchRateRow) -> String {
    let mut cells = vec![name.to_string()];
    cells.extend(CulturalCategory::ALL.iter().map(|c| rate_cell(r.rates.get(c).copied().flatten())));
    row(&cells)
}

/// Category match rate (%) under both denominators.
pub fn render_match_rate(report: &MatchRateReport) -> String {
    let mut out = String::from("## Category match rate (%)\n\n");
    let _ = writeln!(out, "Default denominator: {}.\n", report.default.describe());
    let mut cols = vec!["Denominator"];
    cols.extend(CulturalCategory::ALL.iter().map(|c| c.label()));
    out.push_str(&header(&cols));
    out.push_str(&match_row("participant selected", &report.participant_selected));
    out.push_str(&match_row("all pairs", &report.all_pairs));
    out
}

/// Share of picks (%) per region and model.
pub fn render_preference(rows: &[PreferenceRow], models: &[String]) -> String {
    let mut out = String::from("## Caption preference (%)\n\n");
    let mut cols = vec!["Region", "Responses"];
    cols.extend(models.iter().map(String::as_str));
    out.push_str(&header(&cols));
    for r in rows {
        let mut cells = vec![r.region.label().to_string(), r.responses.to_string()];
        cells.extend(models.iter().map(|m| format!("{:.1}", 100.0 * r.rates.get(m).copied().unwrap_or(0.0))));
        out.push_str(&row(&cells));
    }
    out
}

pub fn render_rankings(rankings: &[RegionRanking], model: &str) -> String {
    let mut out = format!("## Images most and least often choosing {model}\n\n");
    out.push_str(&header(&["Region", "Rank", "Top image", "Top share (%)", "Bottom image", "Bottom share (%)"]));
    for r in rankings {
        for i in 0..r.top.len().max(r.bottom.len()) {
            let (ti, ts) = r.top.get(i).map_or(("-".into(), "-".into()), |x| (x.image_id.clone(), format!("{:.1}", 100.0 * x.fraction)));
            let (bi, bs) = r
                .bottom
                .get(i)
                .map_or(("-".into(), "-".into()), |x| (x.image_id.clone(), format!("{:.1}", 100.0 * x.fraction)));
            out.push_str(&row(&[r.region.label().to_string(), (i + 1).to_string(), ti, ts, bi, bs]));
        }
    }
    out
}

fn tally_table(title: &str, counts: &BTreeMap<String, usize>) -> String {
    let total: usize = counts.values().sum();
    let mut out = header(&[title, "Participants", "Share (%)"]);
    for (k, n) in counts {
        let share = if total == 0 { 0.0 } else { 100.0 * *n as f64 / total as f64 };
        out.push_str(&row(&[k.clone(), n.to_string(), format!("{share:.1}")]));
    }
    out
}

pub fn render_demographics(tally: &DemographicTally) -> String {
    let mut out = String::from("## Participants\n\n");
    out.push_str(&tally_table("Age band", &tally.age_band));
    out.push('\n');
    out.push_str(&tally_table("Gender", &tally.gender));
    out
}

/// Full survey report. `matches` is present when caption bundles were
/// available to compare against.
pub fn render_survey_report(
    ingestion: &Ingestion,
    preference: &[PreferenceRow],
    models: &[String],
    matches: Option<&MatchRateReport>,
    rankings: &[RegionRanking],
    ranked_model: &str,
) -> String {
    let mut out = String::from("# Survey report\n\n");
    let _ = writeln!(out, "- responses: {}", ingestion.responses.len());
    let _ = writeln!(out, "- rejected rows: {}\n", ingestion.rejects.len());
    out.push_str(&render_preference(preference, models));
    if let Some(m) = matches {
        out.push('\n');
        out.push_str(&render_match_rate(m));
    }
    out.push('\n');
    out.push_str(&render_rankings(rankings, ranked_model));
    out.push('\n');
    out.push_str(&render_demographics(&ingestion.demographics));
    if !ingestion.rejects.is_empty() {
        out.push_str("\n## Rejected rows\n\n");
        out.push_str(&header(&["Line", "Reason"]));
        for r in &ingestion.rejects {
            out.push_str(&row(&[r.line.to_string(), r.reason.replace('|', "\\|")]));
        }
    }
    out
}
