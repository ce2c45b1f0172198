use std::sync::OnceLock;

use log::warn;
use regex::Regex;

use super::{CategoryKeywords, Question, QuestionError};
use crate::backends::{Backends, ChatMessage, ChatParams, ImageRef};

/// Instruction sent to the LLM for every image when generating questions.
pub const GENERATION_INSTRUCTION: &str = "I have an image. Ask me questions about the content of this image. \
Carefully ask useful questions to get cultural elements about this image. Cultural categories are defined as \
architecture, clothing, food & drink, dance & music, and religion. Avoid asking yes/no questions, and outside of \
the defined cultural categories.";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutcome {
    pub questions: Vec<Question>,
    pub warnings: Vec<String>,
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*•])\s*(.+?)\s*$").unwrap())
}

/// Items of a numbered or bulleted list, in order.
pub fn parse_numbered_list(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter_map(|line| item_re().captures(line))
        .map(|c| c[1].trim_matches(|ch: char| ch == '"' || ch == '*' || ch.is_whitespace()).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn user_prompt(caption: &str, per_image: usize) -> String {
    format!(
        "{GENERATION_INSTRUCTION}\nImage description: {caption}\nAsk {per_image} questions as a numbered list, one question per line."
    )
}

/// Asks the LLM for `per_image` cultural questions about each image.
///
/// The baseline caption of each image is included so that the requests (and
/// therefore the cached replies) differ per image. Questions are tagged with
/// a category by keyword match; untaggable ones keep `category = None`.
pub fn generate_questions(
    images: &[ImageRef],
    per_image: usize,
    backends: &Backends,
    keywords: &CategoryKeywords,
    params: ChatParams,
) -> Result<GenerationOutcome, QuestionError> {
    if per_image == 0 {
        return Err(QuestionError::Precondition("per_image must be at least 1".into()));
    }
    let mut out = GenerationOutcome::default();
    for image in images {
        let caption = match backends.caption(image) {
            Ok(c) => c,
            Err(e) => {
                out.warnings.push(format!("{}: caption failed: {e}", image.image_id));
                continue;
            }
        };
        let reply = match backends.chat(&[ChatMessage::user(user_prompt(&caption, per_image))], params) {
            Ok(r) => r,
            Err(e) => {
                out.warnings.push(format!("{}: question generation failed: {e}", image.image_id));
                continue;
            }
        };
        let items = parse_numbered_list(&reply);
        if items.is_empty() {
            warn!("{}: no parseable questions in reply", image.image_id);
            out.warnings.push(format!("{}: no parseable questions in reply", image.image_id));
            continue;
        }
        if items.len() < per_image {
            out.warnings.push(format!("{}: only {} of {per_image} questions parsed", image.image_id, items.len()));
        }
        for (k, text) in items.into_iter().take(per_image).enumerate() {
            let category = keywords.tag(&text);
            out.questions.push(Question::new(format!("{}-q{}", image.image_id, k + 1), text, category));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ChatScript, MockFixtures, MockTransport, Region};
    use crate::question_bank::CulturalCategory;
    use std::sync::Arc;

    #[test]
    fn parses_numbered_and_bulleted_lines() {
        let reply = "Sure! Here are some:\n1. What type of clothing are the men wearing?\n2) What food is on the table?\n- What music is playing?\nThanks";
        assert_eq!(
            parse_numbered_list(reply),
            vec!["What type of clothing are the men wearing?", "What food is on the table?", "What music is playing?"]
        );
        assert!(parse_numbered_list("I cannot see images.").is_empty());
    }

    fn backends(reply: &str) -> Backends {
        let mut fixtures = MockFixtures { chat: vec![ChatScript::reply_to("Image description", reply)], ..Default::default() };
        fixtures.captions.insert("img".into(), "two men on a bench".into());
        Backends::new(Arc::new(MockTransport::new(fixtures)))
    }

    #[test]
    fn single_clothing_question() {
        let b = backends("1. What type of clothing are the men wearing?");
        let images = [ImageRef::new("img", "img.jpg", Region::EastAsia)];
        let out = generate_questions(&images, 1, &b, &CategoryKeywords::default(), ChatParams::default()).unwrap();
        assert_eq!(out.questions.len(), 1);
        assert_eq!(out.questions[0].category, Some(CulturalCategory::Clothing));
        assert_eq!(out.questions[0].id, "img-q1");
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn unparseable_reply_warns() {
        let b = backends("No questions today.");
        let images = [ImageRef::new("img", "img.jpg", Region::EastAsia)];
        let out = generate_questions(&images, 5, &b, &CategoryKeywords::default(), ChatParams::default()).unwrap();
        assert!(out.questions.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn zero_per_image_is_rejected() {
        let b = backends("1. x");
        assert!(generate_questions(&[], 0, &b, &CategoryKeywords::default(), ChatParams::default()).is_err());
    }

    #[test]
    fn instruction_text_is_fixed() {
        assert!(GENERATION_INSTRUCTION.starts_with("I have an image. Ask me questions about the content of this image."));
        assert!(GENERATION_INSTRUCTION.contains("Carefully ask useful questions to get cultural elements about this image."));
        assert!(GENERATION_INSTRUCTION.ends_with("outside of the defined cultural categories."));
    }
}
