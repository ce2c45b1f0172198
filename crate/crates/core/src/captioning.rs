//! Category-gated VQA, prompt assembly and final caption generation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends, ChatMessage, ChatParams, ImageRef};
use crate::extraction::{active_categories, extract_category_words, CategoryWords};
use crate::metrics::tokenize;
use crate::question_bank::{normalize_object_slot, CulturalCategory, QuestionBank, QuestionError};

/// Instruction opening every caption prompt.
pub const INSTRUCTION: &str = "I will give you the VQA results. Please change the caption based on the VQA results. \
Do not simply attach the VQA results to the caption when you change the caption. Use all the VQA results. \
I.e., Don\u{2019}t skip any information.";

/// [`INSTRUCTION`] with a plain ASCII apostrophe.
pub const INSTRUCTION_ASCII: &str = "I will give you the VQA results. Please change the caption based on the VQA results. \
Do not simply attach the VQA results to the caption when you change the caption. Use all the VQA results. \
I.e., Don't skip any information.";

/// Version of the [`CaptionBundle`] JSON layout.
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaExchange {
    pub category: CulturalCategory,
    pub question: String,
    pub answer: String,
}

impl VqaExchange {
    pub fn line(&self) -> String {
        format!("Question: {} Answer: {}", self.question, self.answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    /// Absent under `--no-caption-prompt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_line: Option<String>,
    pub qa_lines: Vec<String>,
    pub assembled: String,
}

/// Pipeline ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationFlag {
    /// Leave the `Caption:` line out of the prompt.
    NoCaptionPrompt,
    /// Skip extraction and ask about all five categories.
    NoExtraction,
}

impl AblationFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationFlag::NoCaptionPrompt => "no-caption-prompt",
            AblationFlag::NoExtraction => "no-extraction",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub no_caption_prompt: bool,
    /// Use [`INSTRUCTION_ASCII`].
    pub ascii_apostrophe: bool,
}

/// Everything [`run_image`] needs besides the image, bank and backends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionSettings {
    pub flags: BTreeSet<AblationFlag>,
    pub chat: ChatParams,
    pub extraction_chat: ChatParams,
    pub ascii_apostrophe: bool,
}

impl CaptionSettings {
    pub fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            no_caption_prompt: self.flags.contains(&AblationFlag::NoCaptionPrompt),
            ascii_apostrophe: self.ascii_apostrophe,
        }
    }
}

/// One image's full pipeline trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionBundle {
    pub schema_version: u32,
    pub image: ImageRef,
    pub baseline_caption: String,
    pub category_words: CategoryWords,
    /// Extracted phrases rejected because the caption does not contain them.
    #[serde(default)]
    pub dropped_words: Vec<String>,
    pub active_categories: BTreeSet<CulturalCategory>,
    pub exchanges: Vec<VqaExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptBundle>,
    pub final_caption: String,
    /// Set when `final_caption` is the baseline caption.
    pub fallback: bool,
    /// Share of VQA answers whose words all appear in the final caption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub ablation_flags: BTreeSet<AblationFlag>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub errors: Vec<String>,
}

impl CaptionBundle {
    pub fn empty(image: ImageRef) -> Self {
        Self {
            schema_version: BUNDLE_SCHEMA_VERSION,
            image,
            baseline_caption: String::new(),
            category_words: CategoryWords::default(),
            dropped_words: Vec::new(),
            active_categories: BTreeSet::new(),
            exchanges: Vec::new(),
            prompt: None,
            final_caption: String::new(),
            fallback: false,
            coverage: None,
            ablation_flags: BTreeSet::new(),
            warnings: Vec::new(),
            errors: Vec::new(),
        }
    }

    /// A bundle failed when any stage errored.
    pub fn failed(&self) -> bool {
        !self.errors.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("no representative question for {0}")]
    MissingRepresentative(CulturalCategory),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Asks each active category's representative question. Clothing questions
/// get their `{object}` slot filled with `person_words`. Empty answers are
/// dropped and reported in the returned warnings.
pub fn run_vqa(
    image: &ImageRef,
    active: &BTreeSet<CulturalCategory>,
    bank: &QuestionBank,
    person_words: &[String],
    backends: &Backends,
) -> Result<(Vec<VqaExchange>, Vec<String>), CaptionError> {
    let mut questions = Vec::with_capacity(active.len());
    for &category in active {
        let q = bank.representatives.get(&category).ok_or(CaptionError::MissingRepresentative(category))?;
        let text = if q.has_object_slot { normalize_object_slot(q, person_words)? } else { q.text.clone() };
        questions.push((category, text));
    }
    let mut exchanges = Vec::new();
    let mut warnings = Vec::new();
    for (category, question) in questions {
        let answer = backends.vqa(image, &question)?;
        if answer.is_empty() {
            warnings.push(format!("empty VQA answer for {category}; exchange dropped"));
        } else {
            exchanges.push(VqaExchange { category, question, answer });
        }
    }
    Ok((exchanges, warnings))
}

/// Instruction, caption line and QA lines, one section per line.
pub fn build_prompt(caption: &str, exchanges: &[VqaExchange], options: PromptOptions) -> PromptBundle {
    let instruction = if options.ascii_apostrophe { INSTRUCTION_ASCII } else { INSTRUCTION }.to_string();
    let caption_line = (!options.no_caption_prompt).then(|| format!("Caption: {caption}"));
    let qa_lines: Vec<String> = exchanges.iter().map(VqaExchange::line).collect();
    let mut sections = vec![instruction.as_str()];
    sections.extend(caption_line.as_deref());
    sections.extend(qa_lines.iter().map(String::as_str));
    let assembled = sections.join("\n");
    PromptBundle { instruction, caption_line, qa_lines, assembled }
}

/// Trimmed first paragraph of `reply`, or `None` if nothing is left.
pub fn first_paragraph(reply: &str) -> Option<String> {
    let trimmed = reply.trim();
    let mut para = Vec::new();
    for line in trimmed.lines() {
        if line.trim().is_empty() {
            break;
        }
        para.push(line.trim());
    }
    let text = para.join(" ");
    (!text.is_empty()).then_some(text)
}

/// Sends the assembled prompt; `Ok(None)` means the model returned nothing.
pub fn generate_final_caption(
    prompt: &PromptBundle,
    backends: &Backends,
    params: ChatParams,
) -> Result<Option<String>, BackendError> {
    let reply = backends.chat(&[ChatMessage::user(prompt.assembled.clone())], params)?;
    Ok(first_paragraph(&reply))
}

/// Share of exchanges whose answer words all occur in `caption`.
pub fn answer_coverage(exchanges: &[VqaExchange], caption: &str) -> Option<f64> {
    if exchanges.is_empty() {
        return None;
    }
    let words: BTreeSet<String> = tokenize(caption).into_iter().collect();
    let covered = exchanges.iter().filter(|e| tokenize(&e.answer).iter().all(|t| words.contains(t))).count();
    Some(covered as f64 / exchanges.len() as f64)
}

/// Runs the whole chain for one image. Stage failures are recorded on the
/// bundle, whose caption then falls back to the baseline.
///
/// `baseline` skips the caption call when the manifest already has one.
pub fn run_image(
    image: &ImageRef,
    baseline: Option<&str>,
    bank: &QuestionBank,
    backends: &Backends,
    settings: &CaptionSettings,
) -> CaptionBundle {
    let mut bundle = CaptionBundle::empty(image.clone());
    bundle.ablation_flags = settings.flags.clone();

    let baseline = match baseline {
        Some(c) if !c.trim().is_empty() => c.trim().to_string(),
        _ => match backends.caption(image) {
            Ok(c) => c,
            Err(e) => {
                bundle.errors.push(format!("caption: {e}"));
                return bundle;
            }
        },
    };
    bundle.baseline_caption = baseline.clone();
    bundle.final_caption = baseline.clone();

    if settings.flags.contains(&AblationFlag::NoExtraction) {
        bundle.active_categories = CulturalCategory::ALL.into_iter().collect();
    } else {
        match extract_category_words(&baseline, backends, settings.extraction_chat) {
            Ok(ex) => {
                bundle.active_categories = active_categories(&ex.words);
                bundle.category_words = ex.words;
                bundle.dropped_words = ex.dropped;
                bundle.warnings.extend(ex.warnings);
            }
            Err(e) => bundle.errors.push(format!("extraction: {e}")),
        }
    }

    let person_words = bundle.category_words.person_words().to_vec();
    match run_vqa(image, &bundle.active_categories, bank, &person_words, backends) {
        Ok((exchanges, warnings)) => {
            bundle.exchanges = exchanges;
            bundle.warnings.extend(warnings);
        }
        Err(e) => bundle.errors.push(format!("vqa: {e}")),
    }

    let prompt = build_prompt(&baseline, &bundle.exchanges, settings.prompt_options());
    if !bundle.failed() && !bundle.exchanges.is_empty() {
        match generate_final_caption(&prompt, backends, settings.chat) {
            Ok(Some(caption)) => {
                bundle.coverage = answer_coverage(&bundle.exchanges, &caption);
                bundle.final_caption = caption;
            }
            Ok(None) => bundle.warnings.push("empty LLM reply; kept the baseline caption".into()),
            Err(e) => bundle.errors.push(format!("chat: {e}")),
        }
    } else if !bundle.failed() {
        bundle.warnings.push("no VQA results; kept the baseline caption".into());
    }
    bundle.prompt = Some(prompt);
    bundle.fallback = bundle.final_caption == bundle.baseline_caption;
    bundle
}
