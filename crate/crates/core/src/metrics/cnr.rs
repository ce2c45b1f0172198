use serde::{Deserialize, Serialize};

use super::{tokenize, CultureLexicon, MetricError};

/// Culture Noise Rate of one caption, reported in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnrResult {
    pub cultural_tokens: usize,
    pub total_tokens: usize,
    pub rate_percent: f64,
}

/// Share of caption tokens covered by lexicon terms.
///
/// Terms are matched greedily, longest first and without overlap; a
/// multi-word term counts as many tokens as it has words. Regions and
/// categories are ignored here.
pub fn cnr(caption: &str, lexicon: &CultureLexicon) -> Result<CnrResult, MetricError> {
    let tokens = tokenize(caption);
    if tokens.is_empty() {
        return Err(MetricError::EmptyCaption);
    }
    let cultural_tokens: usize = lexicon.greedy_matches(&tokens).iter().map(|(_, len)| len).sum();
    Ok(CnrResult {
        cultural_tokens,
        total_tokens: tokens.len(),
        rate_percent: 100.0 * cultural_tokens as f64 / tokens.len() as f64,
    })
}
