//! Category-word extraction from a baseline caption.
//!
//! A chat model lists the caption words that relate to each cultural
//! category. Only categories with at least one word that really occurs in the
//! caption are treated as present in the image, and only those get VQA
//! questions downstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends, ChatMessage, ChatParams};
use crate::question_bank::CulturalCategory;

/// Prefix of the extraction request; the caption follows.
pub const EXTRACTION_INSTRUCTION: &str =
    "Please extract the words related to Architecture, People, Food & Drink, Dance & Music, and Religion from Caption. Caption: ";

/// Pins the reply format so [`parse_extraction`] can read it.
pub const EXTRACTION_FORMAT: &str = "Answer with one line per category that has related words, in the form \
\"Label: word, word\", using only the labels Architecture, People, Food & Drink, Dance & Music and Religion. \
Copy the words exactly as they appear in the caption. Leave out categories without related words.";

pub fn extraction_prompt(caption: &str) -> String {
    format!("{EXTRACTION_INSTRUCTION}{caption}")
}

/// Labels the extraction model answers with. `People` stands in for
/// clothing, since people are what wear it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExtractionLabel {
    Architecture,
    People,
    FoodDrink,
    DanceMusic,
    Religion,
}

impl ExtractionLabel {
    pub const ALL: [ExtractionLabel; 5] = [
        ExtractionLabel::Architecture,
        ExtractionLabel::People,
        ExtractionLabel::FoodDrink,
        ExtractionLabel::DanceMusic,
        ExtractionLabel::Religion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExtractionLabel::Architecture => "Architecture",
            ExtractionLabel::People => "People",
            ExtractionLabel::FoodDrink => "Food & Drink",
            ExtractionLabel::DanceMusic => "Dance & Music",
            ExtractionLabel::Religion => "Religion",
        }
    }

    pub fn category(self) -> CulturalCategory {
        match self {
            ExtractionLabel::Architecture => CulturalCategory::Architecture,
            ExtractionLabel::People => CulturalCategory::Clothing,
            ExtractionLabel::FoodDrink => CulturalCategory::FoodDrink,
            ExtractionLabel::DanceMusic => CulturalCategory::DanceMusic,
            ExtractionLabel::Religion => CulturalCategory::Religion,
        }
    }

    /// Case-insensitive; accepts "and" for "&" and ignores spacing and
    /// markdown decoration. "Clothing" is read as `People`.
    pub fn parse(s: &str) -> Option<ExtractionLabel> {
        let folded: String =
            s.to_lowercase().replace(" and ", "&").chars().filter(|c| c.is_alphanumeric()).collect();
        match folded.as_str() {
            "architecture" => Some(ExtractionLabel::Architecture),
            "people" | "person" | "clothing" => Some(ExtractionLabel::People),
            "fooddrink" => Some(ExtractionLabel::FoodDrink),
            "dancemusic" => Some(ExtractionLabel::DanceMusic),
            "religion" => Some(ExtractionLabel::Religion),
            _ => None,
        }
    }
}

impl fmt::Display for ExtractionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Extracted words per label. Labels with no words are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryWords(pub BTreeMap<ExtractionLabel, Vec<String>>);

impl CategoryWords {
    pub fn is_empty(&self) -> bool {
        self.0.values().all(Vec::is_empty)
    }

    pub fn get(&self, label: ExtractionLabel) -> &[String] {
        self.0.get(&label).map_or(&[], Vec::as_slice)
    }

    /// Adds `word` unless already listed under `label` (case-insensitively).
    pub fn insert(&mut self, label: ExtractionLabel, word: impl Into<String>) {
        let word = word.into();
        let list = self.0.entry(label).or_default();
        if !list.iter().any(|w| w.eq_ignore_ascii_case(&word)) {
            list.push(word);
        }
    }

    /// Person words for the clothing question's `{object}` slot.
    pub fn person_words(&self) -> &[String] {
        self.get(ExtractionLabel::People)
    }

    pub fn words(&self) -> impl Iterator<Item = (ExtractionLabel, &str)> {
        self.0.iter().flat_map(|(l, ws)| ws.iter().map(move |w| (*l, w.as_str())))
    }
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("cannot extract from an empty caption")]
    EmptyCaption,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub words: CategoryWords,
    /// Phrases the model returned that are not in the caption.
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

static LABEL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(architecture|people|clothing|food\s*(?:&|and)\s*drink|dance\s*(?:&|and)\s*music|religion)\W{0,3}\s*:")
        .expect("valid label pattern")
});

fn split_words(list: &str) -> impl Iterator<Item = String> + '_ {
    list.split([',', ';']).filter_map(|w| {
        let w = w.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '.' | '‘' | '’' | '“' | '”')).trim();
        let lower = w.to_lowercase();
        let empty = w.is_empty() || matches!(lower.as_str(), "none" | "n/a" | "na" | "-" | "nothing" | "no words");
        (!empty).then(|| w.to_string())
    })
}

fn parse_lines(reply: &str) -> CategoryWords {
    let mut out = CategoryWords::default();
    for line in reply.lines() {
        if LABEL_RE.find_iter(line).count() > 1 {
            for (label, w) in parse_inline(line).words() {
                out.insert(label, w);
            }
            continue;
        }
        let line = line.trim().trim_start_matches(|c: char| matches!(c, '-' | '*' | '•') || c.is_whitespace());
        let Some((lhs, rhs)) = line.split_once(':') else { continue };
        let lhs = lhs.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | ' '));
        if let Some(label) = ExtractionLabel::parse(lhs) {
            for w in split_words(rhs) {
                out.insert(label, w);
            }
        }
    }
    out
}

fn parse_inline(reply: &str) -> CategoryWords {
    let mut out = CategoryWords::default();
    let hits: Vec<_> = LABEL_RE.captures_iter(reply).collect();
    for (i, cap) in hits.iter().enumerate() {
        let whole = cap.get(0).expect("match");
        let next_label = hits.get(i + 1).map_or(reply.len(), |next| next.get(0).expect("match").start());
        let line_end = reply[whole.end()..].find('\n').map_or(reply.len(), |n| whole.end() + n);
        let end = next_label.min(line_end);
        if let Some(label) = ExtractionLabel::parse(&cap[1]) {
            for w in split_words(&reply[whole.end()..end]) {
                out.insert(label, w);
            }
        }
    }
    out
}

/// Reads `Label: w1, w2` lines; if none are found, scans for labels followed
/// by a colon anywhere in the text. Unknown labels are ignored.
///
/// ```
/// use cic::extraction::{parse_extraction, ExtractionLabel};
/// let words = parse_extraction("FOOD & DRINK: rice");
/// assert_eq!(words.get(ExtractionLabel::FoodDrink), ["rice"]);
/// ```
pub fn parse_extraction(reply: &str) -> CategoryWords {
    let lines = parse_lines(reply);
    if lines.is_empty() {
        parse_inline(reply)
    } else {
        lines
    }
}

/// Keeps only phrases occurring in `caption` (ignoring case); returns the
/// dropped ones.
pub fn guard_against_caption(words: CategoryWords, caption: &str) -> (CategoryWords, Vec<String>) {
    let hay = caption.to_lowercase();
    let mut kept = CategoryWords::default();
    let mut dropped = Vec::new();
    for (label, list) in words.0 {
        for w in list {
            if hay.contains(&w.to_lowercase()) {
                kept.insert(label, w);
            } else {
                dropped.push(w);
            }
        }
    }
    (kept, dropped)
}

pub fn extract_category_words(
    caption: &str,
    backends: &Backends,
    params: ChatParams,
) -> Result<Extraction, ExtractionError> {
    if caption.trim().is_empty() {
        return Err(ExtractionError::EmptyCaption);
    }
    let messages = [ChatMessage::system(EXTRACTION_FORMAT), ChatMessage::user(extraction_prompt(caption))];
    let reply = backends.chat(&messages, params)?;
    let parsed = parse_extraction(&reply);
    let mut warnings = Vec::new();
    if parsed.is_empty() && !reply.trim().is_empty() && LABEL_RE.find(&reply).is_none() {
        warnings.push(format!("extraction reply had no category lines: {:?}", reply.trim()));
    }
    let (words, dropped) = guard_against_caption(parsed, caption);
    if !dropped.is_empty() {
        warnings.push(format!("dropped words not in caption: {}", dropped.join(", ")));
    }
    Ok(Extraction { words, dropped, warnings })
}

/// Categories with at least one word, `People` counting as clothing.
pub fn active_categories(words: &CategoryWords) -> BTreeSet<CulturalCategory> {
    words.0.iter().filter(|(_, ws)| !ws.is_empty()).map(|(l, _)| l.category()).collect()
}
