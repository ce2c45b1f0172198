use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::backends::Region;
use crate::captioning::CaptionBundle;
use crate::question_bank::CulturalCategory;
use crate::survey::SurveyResponse;

/// Which (participant, image) pairs count towards a category's match rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchDenominator {
    /// Pairs where the participant selected the category; agreement means
    /// the pipeline detected it too.
    #[default]
    ParticipantSelected,
    /// Every pair; agreement means participant and pipeline made the same
    /// call (both present or both absent).
    AllPairs,
}

impl MatchDenominator {
    pub fn describe(self) -> &'static str {
        match self {
            MatchDenominator::ParticipantSelected => "pairs where the participant selected the category",
            MatchDenominator::AllPairs => "all (participant, image) pairs; agreement on presence or absence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRateRow {
    pub denominator: MatchDenominator,
    pub agreements: BTreeMap<CulturalCategory, usize>,
    pub pairs: BTreeMap<CulturalCategory, usize>,
    /// `None` where the denominator is zero.
    pub rates: BTreeMap<CulturalCategory, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRateReport {
    pub default: MatchDenominator,
    pub participant_selected: MatchRateRow,
    pub all_pairs: MatchRateRow,
}

impl MatchRateReport {
    pub fn primary(&self) -> &MatchRateRow {
        match self.default {
            MatchDenominator::ParticipantSelected => &self.participant_selected,
            MatchDenominator::AllPairs => &self.all_pairs,
        }
    }
}

fn row(
    denominator: MatchDenominator,
    pairs: &[(&BTreeSet<CulturalCategory>, &BTreeSet<CulturalCategory>)],
) -> MatchRateRow {
    let mut agreements = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut rates = BTreeMap::new();
    for c in CulturalCategory::ALL {
        let (mut agree, mut n) = (0, 0);
        for (selected, detected) in pairs {
            let (s, d) = (selected.contains(&c), detected.contains(&c));
            match denominator {
                MatchDenominator::ParticipantSelected if s => {
                    n += 1;
                    agree += usize::from(d);
                }
                MatchDenominator::ParticipantSelected => {}
                MatchDenominator::AllPairs => {
                    n += 1;
                    agree += usize::from(s == d);
                }
            }
        }
        agreements.insert(c, agree);
        counts.insert(c, n);
        rates.insert(c, (n > 0).then(|| agree as f64 / n as f64));
    }
    MatchRateRow { denominator, agreements, pairs: counts, rates }
}

/// Agreement between the categories participants saw and the categories the
/// pipeline detected, under both denominators.
pub fn match_rate(responses: &[SurveyResponse], bundles: &[CaptionBundle]) -> Result<MatchRateReport, MetricError> {
    let detected: BTreeMap<&str, &BTreeSet<CulturalCategory>> =
        bundles.iter().map(|b| (b.image.image_id.as_str(), &b.active_categories)).collect();
    let pairs = responses
        .iter()
        .map(|r| {
            detected
                .get(r.image_id.as_str())
                .map(|d| (&r.item1_selection, *d))
                .ok_or_else(|| MetricError::UnknownBundle(r.image_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatchRateReport {
        default: MatchDenominator::default(),
        participant_selected: row(MatchDenominator::ParticipantSelected, &pairs),
        all_pairs: row(MatchDenominator::AllPairs, &pairs),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRow {
    pub region: Region,
    pub responses: usize,
    /// Fraction of responses picking each model's caption.
    pub rates: BTreeMap<String, f64>,
}

/// Per-region share of picks for each model. `models` are always reported,
/// with rate 0 when never picked; other picked models are added.
pub fn preference_rate(responses: &[SurveyResponse], models: &[String]) -> Vec<PreferenceRow> {
    let mut all_models: BTreeSet<String> = models.iter().cloned().collect();
    all_models.extend(responses.iter().map(|r| r.item2_model.clone()));
    Region::ALL
        .into_iter()
        .filter_map(|region| {
            let of_region: Vec<&SurveyResponse> = responses.iter().filter(|r| r.region == region).collect();
            if of_region.is_empty() {
                return None;
            }
            let n = of_region.len();
            let rates = all_models
                .iter()
                .map(|m| {
                    let picks = of_region.iter().filter(|r| &r.item2_model == m).count();
                    (m.clone(), picks as f64 / n as f64)
                })
                .collect();
            Some(PreferenceRow { region, responses: n, rates })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image_id: String,
    pub picks: usize,
    pub responses: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRanking {
    pub region: Region,
    pub top: Vec<RankedImage>,
    pub bottom: Vec<RankedImage>,
}

/// Images ranked by the share of participants picking `model`'s caption.
/// `top` is best-first, `bottom` worst-first; ties go to the lower image id.
pub fn rank_images(responses: &[SurveyResponse], k: usize, model: &str) -> Vec<RegionRanking> {
    Region::ALL
        .into_iter()
        .filter_map(|region| {
            let mut per_image: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            for r in responses.iter().filter(|r| r.region == region) {
                let e = per_image.entry(r.image_id.as_str()).or_default();
                e.1 += 1;
                e.0 += usize::from(r.item2_model == model);
            }
            if per_image.is_empty() {
                return None;
            }
            let ranked: Vec<RankedImage> = per_image
                .into_iter()
                .map(|(id, (picks, n))| RankedImage {
                    image_id: id.to_string(),
                    picks,
                    responses: n,
                    fraction: picks as f64 / n as f64,
                })
                .collect();
            let mut top = ranked.clone();
            top.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then_with(|| a.image_id.cmp(&b.image_id)));
            top.truncate(k);
            let mut bottom = ranked;
            bottom.sort_by(|a, b| a.fraction.total_cmp(&b.fraction).then_with(|| a.image_id.cmp(&b.image_id)));
            bottom.truncate(k);
            Some(RegionRanking { region, top, bottom })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::Demographics;

    fn resp(participant: &str, image: &str, region: Region, item1: &[CulturalCategory], model: &str) -> SurveyResponse {
        SurveyResponse {
            participant_id: participant.into(),
            page_id: format!("{participant}-{image}"),
            image_id: image.into(),
            region,
            item1_selection: item1.iter().copied().collect(),
            item2_slot: "A".into(),
            item2_model: model.into(),
            demographics: Demographics::default(),
        }
    }

    fn bundle(image: &str, active: &[CulturalCategory]) -> CaptionBundle {
        let mut b = CaptionBundle::empty(crate::backends::ImageRef::new(image, "x", Region::West));
        b.active_categories = active.iter().copied().collect();
        b
    }

    #[test]
    fn single_participant_match() {
        let r = [resp("p", "i", Region::West, &[CulturalCategory::Clothing], "CIC")];
        let rep = match_rate(&r, &[bundle("i", &[CulturalCategory::Clothing])]).unwrap();
        assert_eq!(rep.primary().rates[&CulturalCategory::Clothing], Some(1.0));
        assert_eq!(rep.primary().rates[&CulturalCategory::Religion], None);
    }

    #[test]
    fn selected_but_not_detected_is_zero() {
        let r = [resp("p", "i", Region::West, &[CulturalCategory::Religion], "CIC")];
        let rep = match_rate(&r, &[bundle("i", &[])]).unwrap();
        assert_eq!(rep.participant_selected.rates[&CulturalCategory::Religion], Some(0.0));
        assert_eq!(rep.all_pairs.rates[&CulturalCategory::Religion], Some(0.0));
        // both absent counts as agreement under the all-pairs reading
        assert_eq!(rep.all_pairs.rates[&CulturalCategory::Clothing], Some(1.0));
    }

    #[test]
    fn unknown_bundle_is_error() {
        let r = [resp("p", "missing", Region::West, &[], "CIC")];
        assert!(matches!(match_rate(&r, &[]), Err(MetricError::UnknownBundle(_))));
    }

    #[test]
    fn unanimous_preference() {
        let models: Vec<String> = ["GIT", "CoCa", "BLIP2", "CIC"].map(String::from).to_vec();
        let r: Vec<_> = (0..10).map(|i| resp(&format!("p{i}"), "i", Region::Africa, &[], "CIC")).collect();
        let rows = preference_rate(&r, &models);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rates["CIC"], 1.0);
        assert_eq!(rows[0].rates["GIT"], 0.0);
        assert_eq!(rows[0].responses, 10);
    }

    #[test]
    fn uniform_ranking_orders_by_image_id() {
        let r = vec![
            resp("p", "c", Region::West, &[], "CIC"),
            resp("p", "a", Region::West, &[], "CIC"),
            resp("p", "b", Region::West, &[], "CIC"),
        ];
        let ranks = rank_images(&r, 2, "CIC");
        let top: Vec<_> = ranks[0].top.iter().map(|x| x.image_id.as_str()).collect();
        let bottom: Vec<_> = ranks[0].bottom.iter().map(|x| x.image_id.as_str()).collect();
        assert_eq!(top, ["a", "b"]);
        assert_eq!(bottom, ["a", "b"]);
    }

    #[test]
    fn ranking_separates_best_and_worst() {
        let r = vec![
            resp("p1", "good", Region::EastAsia, &[], "CIC"),
            resp("p2", "good", Region::EastAsia, &[], "CIC"),
            resp("p1", "bad", Region::EastAsia, &[], "GIT"),
            resp("p2", "bad", Region::EastAsia, &[], "CIC"),
        ];
        let ranks = rank_images(&r, 1, "CIC");
        assert_eq!(ranks[0].top[0].image_id, "good");
        assert_eq!(ranks[0].bottom[0].image_id, "bad");
        assert_eq!(ranks[0].bottom[0].fraction, 0.5);
    }
}
