use super::{CategoryKeywords, Question, QuestionError};
use crate::backends::{Backends, ChatMessage, ChatParams};
use crate::metrics::{tokenize, CultureLexicon};

/// Prompt for the optional LLM relevance check; `{question}` is replaced.
pub const CLASSIFIER_TEMPLATE: &str = "Does this question ask about architecture, clothing, food & drink, \
dance & music, or religion? Answer yes or no.\nQuestion: {question}";

/// How relevance is decided for questions the keyword rule rejects.
#[derive(Clone, Copy, Default)]
pub enum FilterRule<'a> {
    /// Keyword and lexicon match only.
    #[default]
    Keywords,
    /// Fall back to asking the LLM when no keyword matches.
    Classifier { backends: &'a Backends, params: ChatParams },
}

fn classifier_says_yes(backends: &Backends, params: ChatParams, text: &str) -> Result<bool, QuestionError> {
    let prompt = CLASSIFIER_TEMPLATE.replace("{question}", text);
    let reply = backends.chat(&[ChatMessage::user(prompt)], params)?;
    Ok(reply.trim_start().to_lowercase().starts_with("yes"))
}

/// Drops questions without a category and questions that are not about any
/// cultural category.
///
/// A question is relevant when its text contains a category keyword or a
/// lexicon term, or, under [`FilterRule::Classifier`], when the LLM says so.
pub fn filter_questions(
    raw: &[Question],
    keywords: &CategoryKeywords,
    lexicon: &CultureLexicon,
    rule: FilterRule<'_>,
) -> Result<Vec<Question>, QuestionError> {
    if raw.is_empty() {
        return Err(QuestionError::Precondition("no questions to filter".into()));
    }
    let mut kept = Vec::new();
    for q in raw {
        if q.category.is_none() {
            continue;
        }
        let relevant = keywords.mentions_any(&q.text)
            || lexicon.contains_term(&tokenize(&q.text), |_| true)
            || match rule {
                FilterRule::Keywords => false,
                FilterRule::Classifier { backends, params } => classifier_says_yes(backends, params, &q.text)?,
            };
        if relevant {
            kept.push(q.clone());
        }
    }
    Ok(kept)
}
