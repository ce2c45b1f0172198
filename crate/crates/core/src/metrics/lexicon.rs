use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricError};
use crate::backends::Region;
use crate::question_bank::CulturalCategory;

/// One cultural term. An empty `regions` list marks the term as universal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub category: CulturalCategory,
    #[serde(default)]
    pub regions: Vec<Region>,
}

impl LexiconEntry {
    pub fn new(term: impl Into<String>, category: CulturalCategory, regions: Vec<Region>) -> Self {
        Self { term: term.into(), category, regions }
    }
}

/// Term table deciding which caption words are cultural.
#[derive(Debug, Clone, Default)]
pub struct CultureLexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<Vec<String>, Vec<usize>>,
    max_len: usize,
}

impl CultureLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, MetricError> {
        let mut seen = HashSet::new();
        let mut index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        let mut max_len = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.term.trim().is_empty() {
                return Err(MetricError::Lexicon(format!("entry {i} has an empty term")));
            }
            if e.term != e.term.to_lowercase() {
                return Err(MetricError::Lexicon(format!("term {:?} is not lowercase", e.term)));
            }
            let tokens = tokenize(&e.term);
            if tokens.is_empty() {
                return Err(MetricError::Lexicon(format!("term {:?} has no word characters", e.term)));
            }
            if !seen.insert((tokens.clone(), e.category)) {
                return Err(MetricError::Lexicon(format!("duplicate term {:?} for {}", e.term, e.category)));
            }
            max_len = max_len.max(tokens.len());
            index.entry(tokens).or_default().push(i);
        }
        Ok(Self { entries, index, max_len })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Small bundled lexicon for tests and demos. It is illustrative only and
    /// does not stand in for a real cultural knowledge base.
    pub fn demo() -> Self {
        Self::from_jsonl_str(include_str!("../../data/demo_lexicon.jsonl")).expect("bundled demo lexicon is valid")
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self, MetricError> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| MetricError::Lexicon(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<LexiconEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MetricError::Io { path: path.display().to_string(), source })?;
        Self::from_jsonl_str(&text)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose normalized term equals `tokens`.
    pub fn lookup(&self, tokens: &[String]) -> impl Iterator<Item = &LexiconEntry> {
        self.index.get(tokens).into_iter().flatten().map(|&i| &self.entries[i])
    }

    /// Length of the longest term starting at `start`, if any.
    pub fn longest_match_at(&self, tokens: &[String], start: usize) -> Option<usize> {
        let room = tokens.len().saturating_sub(start).min(self.max_len);
        (1..=room).rev().find(|&len| self.index.contains_key(&tokens[start..start + len]))
    }

    /// Non-overlapping matches found by a left-to-right greedy longest-match
    /// scan, as `(start, len)` pairs.
    pub fn greedy_matches(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_match_at(tokens, i) {
                Some(len) => {
                    out.push((i, len));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Whether any span of `tokens` (at any offset, of any length) is a term
    /// whose entry satisfies `pred`.
    pub fn contains_term(&self, tokens: &[String], pred: impl Fn(&LexiconEntry) -> bool) -> bool {
        (0..tokens.len()).any(|start| {
            let room = (tokens.len() - start).min(self.max_len);
            (1..=room).any(|len| self.lookup(&tokens[start..start + len]).any(&pred))
        })
    }
}
