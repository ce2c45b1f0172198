//! Caption metrics: Culture Noise Rate, CLIPScore, score tables and the
//! survey-derived match and preference rates.

mod clip;
mod cnr;
mod lexicon;
mod scores;
mod survey_tables;

use thiserror::Error;

pub use clip::{clip_score, clip_score_with, ClipScore, CLIP_SCORE_WEIGHT};
pub use cnr::{cnr, CnrResult};
pub use lexicon::{CultureLexicon, LexiconEntry};
pub use scores::{aggregate_scores, read_scores_csv, write_scores_csv, ScoreRow, AGGREGATE_IMAGE_ID, TOTAL_REGION};
pub use survey_tables::{
    match_rate, preference_rate, rank_images, MatchDenominator, MatchRateReport, MatchRateRow, PreferenceRow,
    RankedImage, RegionRanking,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("caption has no tokens; rate is undefined")]
    EmptyCaption,
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid lexicon: {0}")]
    Lexicon(String),
    #[error("response references unknown image {0}")]
    UnknownBundle(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Lowercased alphanumeric runs; every other character separates tokens.
///
/// ```
/// assert_eq!(cic::metrics::tokenize("A kimono-clad man, eating."), ["a", "kimono", "clad", "man", "eating"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("A man, eating."), ["a", "man", "eating"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("kimono-clad"), ["kimono", "clad"]);
        assert_eq!(tokenize("Café  NAÏVE"), ["café", "naïve"]);
    }
}
