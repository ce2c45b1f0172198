use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CulturalCategory;
use crate::metrics::tokenize;

/// Keyword list used to tag generated questions with a category and to
/// decide relevance during filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryKeywords {
    keywords: BTreeMap<CulturalCategory, Vec<String>>,
}

impl Default for CategoryKeywords {
    fn default() -> Self {
        let seed: [(CulturalCategory, &[&str]); 5] = [
            (
                CulturalCategory::Architecture,
                &["architecture", "architectural", "building", "buildings", "house", "houses", "structure", "structures", "roof"],
            ),
            (
                CulturalCategory::Clothing,
                &["clothing", "clothes", "attire", "wearing", "wear", "dress", "dressed", "garment", "garments", "outfit", "costume", "costumes"],
            ),
            (
                CulturalCategory::FoodDrink,
                &["food", "foods", "drink", "drinks", "dish", "dishes", "cuisine", "meal", "eating", "eaten", "beverage"],
            ),
            (
                CulturalCategory::DanceMusic,
                &["dance", "dances", "dancing", "music", "musical", "instrument", "instruments", "song", "songs"],
            ),
            (
                CulturalCategory::Religion,
                &["religion", "religious", "worship", "spiritual", "ritual", "deity", "prayer", "sacred"],
            ),
        ];
        Self {
            keywords: seed
                .into_iter()
                .map(|(c, words)| (c, words.iter().map(|w| w.to_string()).collect()))
                .collect(),
        }
    }
}

impl CategoryKeywords {
    pub fn new(keywords: BTreeMap<CulturalCategory, Vec<String>>) -> Self {
        Self { keywords }
    }

    pub fn add(&mut self, category: CulturalCategory, keyword: impl Into<String>) {
        self.keywords.entry(category).or_default().push(keyword.into());
    }

    pub fn keywords(&self, category: CulturalCategory) -> &[String] {
        self.keywords.get(&category).map(Vec::as_slice).unwrap_or(&[])
    }

    fn hits(&self, tokens: &[String], category: CulturalCategory) -> usize {
        self.keywords(category)
            .iter()
            .filter(|kw| {
                let kw_tokens = tokenize(kw);
                !kw_tokens.is_empty() && tokens.windows(kw_tokens.len()).any(|w| w == kw_tokens.as_slice())
            })
            .count()
    }

    /// The category with the most keyword hits; ties go to the earlier
    /// category. `None` when nothing matches.
    pub fn tag(&self, text: &str) -> Option<CulturalCategory> {
        let tokens = tokenize(text);
        let mut best: Option<(CulturalCategory, usize)> = None;
        for c in CulturalCategory::ALL {
            let h = self.hits(&tokens, c);
            if h > 0 && best.is_none_or(|(_, b)| h > b) {
                best = Some((c, h));
            }
        }
        best.map(|(c, _)| c)
    }

    pub fn mentions_any(&self, text: &str) -> bool {
        let tokens = tokenize(text);
        CulturalCategory::ALL.into_iter().any(|c| self.hits(&tokens, c) > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question_bank::QuestionBank;

    #[test]
    fn reference_questions_tag_to_their_category() {
        let kw = CategoryKeywords::default();
        for q in QuestionBank::reference().raw {
            assert_eq!(kw.tag(&q.text), q.category, "{}", q.text);
        }
    }

    #[test]
    fn mood_question_is_untaggable() {
        let kw = CategoryKeywords::default();
        assert_eq!(kw.tag("What is the overall mood or atmosphere conveyed by the portrait?"), None);
    }

    #[test]
    fn majority_wins_and_ties_go_to_earlier_category() {
        let kw = CategoryKeywords::default();
        assert_eq!(kw.tag("What food and drink is on the roof?"), Some(CulturalCategory::FoodDrink));
        assert_eq!(kw.tag("What dish is by the building?"), Some(CulturalCategory::Architecture));
    }

    #[test]
    fn custom_multiword_keyword() {
        let mut kw = CategoryKeywords::default();
        kw.add(CulturalCategory::Religion, "holy site");
        assert_eq!(kw.tag("Is this a holy site?"), Some(CulturalCategory::Religion));
    }
}
