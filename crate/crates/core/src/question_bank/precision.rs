use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{normalize_object_slot, CulturalCategory, Question, QuestionCluster, QuestionError};
use crate::backends::{Backends, ImageRef};
use crate::metrics::{tokenize, CultureLexicon};

/// One VQA answer given by a cluster member on a region-labelled image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(flatten)]
    pub image: ImageRef,
    pub question_id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionScore {
    pub question_id: String,
    pub tp: usize,
    pub fp: usize,
    /// `tp / (tp + fp)`; `None` when no answer was counted.
    pub precision: Option<f64>,
}

/// Cultural precision of every member of `cluster`.
///
/// An answer is a true positive when it contains a lexicon term of the
/// question's category that is either universal or listed for the image's
/// region. Other non-empty answers are false positives; empty answers are
/// not counted. Transcripts of non-member questions are ignored.
pub fn score_precision(
    cluster: &QuestionCluster,
    transcripts: &[Transcript],
    lexicon: &CultureLexicon,
) -> Vec<PrecisionScore> {
    let mut counts: HashMap<&str, (usize, usize)> =
        cluster.members.iter().map(|q| (q.id.as_str(), (0, 0))).collect();
    for t in transcripts {
        let Some((tp, fp)) = counts.get_mut(t.question_id.as_str()) else { continue };
        let tokens = tokenize(&t.answer);
        if tokens.is_empty() {
            continue;
        }
        let region = t.image.region;
        let hit = lexicon.contains_term(&tokens, |e| {
            e.category == cluster.category && (e.regions.is_empty() || e.regions.contains(&region))
        });
        if hit {
            *tp += 1;
        } else {
            *fp += 1;
        }
    }
    cluster
        .members
        .iter()
        .map(|q| {
            let (tp, fp) = counts[q.id.as_str()];
            let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
            PrecisionScore { question_id: q.id.clone(), tp, fp, precision }
        })
        .collect()
}

/// Asks every cluster member on every image. Questions with an `{object}`
/// slot are asked about "people".
pub fn collect_transcripts(
    clusters: &[QuestionCluster],
    images: &[ImageRef],
    backends: &Backends,
) -> Result<Vec<Transcript>, QuestionError> {
    let mut out = Vec::new();
    for q in clusters.iter().flat_map(|c| c.members.iter()) {
        let text = if q.has_object_slot { normalize_object_slot(q, &[])? } else { q.text.clone() };
        for image in images {
            let answer = backends.vqa(image, &text)?;
            out.push(Transcript { image: image.clone(), question_id: q.id.clone(), answer });
        }
    }
    Ok(out)
}

/// The `k` highest-precision questions per category across that category's
/// clusters; ties go to the lower question id.
///
/// Every category in `required` must have at least one defined score.
pub fn select_top_k(
    clusters: &[QuestionCluster],
    scores: &[PrecisionScore],
    k: usize,
    required: &[CulturalCategory],
) -> Result<BTreeMap<CulturalCategory, Vec<Question>>, QuestionError> {
    let by_id: HashMap<&str, f64> =
        scores.iter().filter_map(|s| s.precision.map(|p| (s.question_id.as_str(), p))).collect();
    let mut candidates: BTreeMap<CulturalCategory, Vec<Question>> = BTreeMap::new();
    for cluster in clusters {
        for q in &cluster.members {
            if let Some(&p) = by_id.get(q.id.as_str()) {
                candidates.entry(cluster.category).or_default().push(Question {
                    precision: Some(p),
                    selected: true,
                    ..q.clone()
                });
            }
        }
    }
    let missing: Vec<_> = required.iter().copied().filter(|c| !candidates.contains_key(c)).collect();
    if !missing.is_empty() {
        return Err(QuestionError::Selection(missing));
    }
    for qs in candidates.values_mut() {
        qs.sort_by(|a, b| {
            b.precision
                .partial_cmp(&a.precision)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        qs.dedup_by(|a, b| a.id == b.id);
        qs.truncate(k.max(1));
    }
    Ok(candidates)
}

/// One representative question for each of the five categories.
pub fn select_representatives(
    clusters: &[QuestionCluster],
    scores: &[PrecisionScore],
) -> Result<BTreeMap<CulturalCategory, Question>, QuestionError> {
    Ok(select_top_k(clusters, scores, 1, &CulturalCategory::ALL)?
        .into_iter()
        .filter_map(|(c, mut qs)| (!qs.is_empty()).then(|| (c, qs.remove(0))))
        .collect())
}
