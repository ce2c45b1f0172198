//! Cultural question curation: generation, relevance filtering, similarity
//! clustering, precision scoring and representative selection.

mod cluster;
mod filter;
mod generate;
mod keywords;
mod precision;
mod slot;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;

pub use cluster::{cluster_by_embeddings, cluster_by_similarity, cluster_questions, ClusterOutcome, ClusterParams};
pub use filter::{filter_questions, FilterRule, CLASSIFIER_TEMPLATE};
pub use generate::{generate_questions, parse_numbered_list, GenerationOutcome, GENERATION_INSTRUCTION};
pub use keywords::CategoryKeywords;
pub use precision::{collect_transcripts, score_precision, select_representatives, select_top_k, PrecisionScore, Transcript};
pub use slot::{is_plural_phrase, normalize_object_slot, OBJECT_SLOT};

/// The five cultural categories questions are organized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CulturalCategory {
    #[serde(alias = "architecture")]
    Architecture,
    #[serde(alias = "clothing")]
    Clothing,
    #[serde(alias = "Food & Drink", alias = "food_drink")]
    FoodDrink,
    #[serde(alias = "Dance & Music", alias = "dance_music")]
    DanceMusic,
    #[serde(alias = "religion")]
    Religion,
}

impl CulturalCategory {
    pub const ALL: [CulturalCategory; 5] = [
        CulturalCategory::Architecture,
        CulturalCategory::Clothing,
        CulturalCategory::FoodDrink,
        CulturalCategory::DanceMusic,
        CulturalCategory::Religion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CulturalCategory::Architecture => "Architecture",
            CulturalCategory::Clothing => "Clothing",
            CulturalCategory::FoodDrink => "Food & Drink",
            CulturalCategory::DanceMusic => "Dance & Music",
            CulturalCategory::Religion => "Religion",
        }
    }

    /// Identifier form, as serialized.
    pub fn key(self) -> &'static str {
        match self {
            CulturalCategory::Architecture => "Architecture",
            CulturalCategory::Clothing => "Clothing",
            CulturalCategory::FoodDrink => "FoodDrink",
            CulturalCategory::DanceMusic => "DanceMusic",
            CulturalCategory::Religion => "Religion",
        }
    }

    /// Lenient parse of labels, keys and lowercase variants.
    pub fn parse(s: &str) -> Option<CulturalCategory> {
        let folded: String = s
            .to_lowercase()
            .replace(" and ", "&")
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect();
        match folded.as_str() {
            "architecture" => Some(CulturalCategory::Architecture),
            "clothing" | "clothes" => Some(CulturalCategory::Clothing),
            "fooddrink" => Some(CulturalCategory::FoodDrink),
            "dancemusic" => Some(CulturalCategory::DanceMusic),
            "religion" => Some(CulturalCategory::Religion),
            _ => None,
        }
    }
}

impl fmt::Display for CulturalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One cultural question. Serialized one per line in question bank files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub category: Option<CulturalCategory>,
    #[serde(default)]
    pub cluster_id: Option<u32>,
    #[serde(default)]
    pub precision: Option<f64>,
    #[serde(default)]
    pub selected: bool,
    #[serde(default)]
    pub has_object_slot: bool,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>, category: Option<CulturalCategory>) -> Self {
        let text = text.into();
        let has_object_slot = text.contains(OBJECT_SLOT);
        Self { id: id.into(), text, category, cluster_id: None, precision: None, selected: false, has_object_slot }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCluster {
    pub cluster_id: u32,
    pub category: CulturalCategory,
    pub members: Vec<Question>,
}

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no scored question for categories: {}", .0.iter().map(|c| c.label()).collect::<Vec<_>>().join(", "))]
    Selection(Vec<CulturalCategory>),
    #[error("invalid question bank: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// The curated question set across all stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuestionBank {
    pub raw: Vec<Question>,
    pub filtered: Vec<Question>,
    pub clusters: Vec<QuestionCluster>,
    pub representatives: BTreeMap<CulturalCategory, Question>,
}

impl QuestionBank {
    /// Builds a bank from a flat question list: representatives are the
    /// selected questions, clusters are rebuilt from `cluster_id`.
    pub fn from_questions(questions: Vec<Question>) -> Result<Self, QuestionError> {
        let mut bank = QuestionBank::default();
        let mut clusters: BTreeMap<u32, QuestionCluster> = BTreeMap::new();
        for q in &questions {
            if q.text.trim().is_empty() {
                return Err(QuestionError::Invalid(format!("question {} has empty text", q.id)));
            }
            if q.has_object_slot != q.text.contains(OBJECT_SLOT) {
                return Err(QuestionError::Invalid(format!("question {} has_object_slot disagrees with its text", q.id)));
            }
            let Some(category) = q.category else { continue };
            if let Some(cid) = q.cluster_id {
                let cluster = clusters.entry(cid).or_insert_with(|| QuestionCluster {
                    cluster_id: cid,
                    category,
                    members: Vec::new(),
                });
                if cluster.category != category {
                    return Err(QuestionError::Invalid(format!("cluster {cid} mixes categories")));
                }
                cluster.members.push(q.clone());
            }
            if q.selected {
                if q.precision.is_none() {
                    log::warn!("selected question {} carries no precision score", q.id);
                }
                match bank.representatives.get(&category) {
                    Some(existing) if !better(q, existing) => {}
                    _ => {
                        bank.representatives.insert(category, q.clone());
                    }
                }
            }
        }
        bank.filtered = questions.iter().filter(|q| q.category.is_some()).cloned().collect();
        bank.raw = questions;
        bank.clusters = clusters.into_values().collect();
        Ok(bank)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, QuestionError> {
        Self::from_questions(read_questions(path)?)
    }

    /// The bundled reference bank: the per-cluster questions with their
    /// measured precision, one selected question per category.
    pub fn reference() -> Self {
        let questions = parse_questions(include_str!("../../data/reference_bank.jsonl"))
            .expect("bundled reference bank parses");
        Self::from_questions(questions).expect("bundled reference bank is valid")
    }

    pub fn missing_representatives(&self) -> Vec<CulturalCategory> {
        CulturalCategory::ALL.into_iter().filter(|c| !self.representatives.contains_key(c)).collect()
    }
}

fn better(a: &Question, b: &Question) -> bool {
    let (pa, pb) = (a.precision.unwrap_or(-1.0), b.precision.unwrap_or(-1.0));
    pa > pb || (pa == pb && a.id < b.id)
}

pub fn parse_questions(text: &str) -> Result<Vec<Question>, QuestionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| QuestionError::Invalid(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_questions(path: &Path) -> Result<Vec<Question>, QuestionError> {
    let io = |source| QuestionError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| QuestionError::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_questions(path: &Path, questions: &[Question]) -> Result<(), QuestionError> {
    let io = |source| QuestionError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for q in questions {
        serde_json::to_writer(&mut w, q).map_err(|e| QuestionError::Invalid(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_parse_accepts_labels() {
        assert_eq!(CulturalCategory::parse("Food & Drink"), Some(CulturalCategory::FoodDrink));
        assert_eq!(CulturalCategory::parse("dance and music"), Some(CulturalCategory::DanceMusic));
        assert_eq!(CulturalCategory::parse("FOOD & DRINK"), Some(CulturalCategory::FoodDrink));
        assert_eq!(CulturalCategory::parse("People"), None);
    }

    #[test]
    fn object_slot_flag_follows_text() {
        assert!(Question::new("c1", "What are(is) the {object} wearing in the image?", None).has_object_slot);
        assert!(!Question::new("a1", "What type of architecture is seen in this image?", None).has_object_slot);
    }

    #[test]
    fn reference_bank_has_all_five_representatives() {
        let bank = QuestionBank::reference();
        assert!(bank.missing_representatives().is_empty());
        assert_eq!(
            bank.representatives[&CulturalCategory::Architecture].text,
            "What is the architectural style of the buildings in this image?"
        );
        assert_eq!(
            bank.representatives[&CulturalCategory::Religion].text,
            "What is the predominant religion in the culture depicted in this image?"
        );
        assert_eq!(bank.representatives[&CulturalCategory::DanceMusic].precision, Some(1.0));
        for (c, q) in &bank.representatives {
            assert_eq!(q.category, Some(*c));
        }
    }

    #[test]
    fn jsonl_roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let qs = QuestionBank::reference().raw;
        write_questions(&path, &qs).unwrap();
        assert_eq!(read_questions(&path).unwrap(), qs);
    }

    #[test]
    fn mixed_category_cluster_is_rejected() {
        let mut a = Question::new("a", "What type of architecture is seen?", Some(CulturalCategory::Architecture));
        let mut b = Question::new("b", "What food is served?", Some(CulturalCategory::FoodDrink));
        a.cluster_id = Some(1);
        b.cluster_id = Some(1);
        assert!(matches!(QuestionBank::from_questions(vec![a, b]), Err(QuestionError::Invalid(_))));
    }
}
