use std::sync::OnceLock;

use regex::Regex;

use super::{Question, QuestionError};

/// Placeholder for person words in clothing questions.
pub const OBJECT_SLOT: &str = "{object}";

const DEFAULT_PERSON: &str = "people";

const PLURAL_HEADS: &[&str] = &["people", "children", "persons", "folks", "police", "kids", "crowds", "family", "couple"];
const SINGULAR_HEADS: &[&str] = &["bus", "chorus", "walrus", "crowd", "person", "child"];

/// Whether a person phrase reads as plural, judged by its last word.
pub fn is_plural_phrase(phrase: &str) -> bool {
    let Some(head) = phrase.split_whitespace().last() else { return true };
    let head = head.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if SINGULAR_HEADS.contains(&head.as_str()) {
        return false;
    }
    if PLURAL_HEADS.contains(&head.as_str()) || head.ends_with("men") {
        return true;
    }
    head.ends_with('s') && !head.ends_with("ss")
}

fn join_phrases(words: &[String]) -> String {
    match words {
        [] => DEFAULT_PERSON.to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn agreement_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:are\(is\)|is\(are\))").unwrap())
}

/// Fills `{object}` with the person words and resolves the `are(is)` verb.
///
/// Several phrases, or one with a plural head word, take "are"; a singular
/// head takes "is". No person words fills in "people".
pub fn normalize_object_slot(question: &Question, person_words: &[String]) -> Result<String, QuestionError> {
    if !question.has_object_slot {
        return Err(QuestionError::Precondition(format!("question {} has no {OBJECT_SLOT} slot", question.id)));
    }
    let words: Vec<String> =
        person_words.iter().map(|w| w.trim().to_string()).filter(|w| !w.is_empty()).collect();
    let subject = join_phrases(&words);
    let plural = words.len() != 1 || is_plural_phrase(&words[0]);
    let verb = if plural { "are" } else { "is" };
    Ok(agreement_re().replace_all(&question.text, verb).replace(OBJECT_SLOT, &subject))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOTHING: &str = "What type of clothing are(is) the {object} in the image wearing?";

    fn q(text: &str) -> Question {
        Question::new("c", text, None)
    }

    // Independent oracle: a hand-labelled word list.
    const PLURAL: &[&str] = &["men", "women", "people", "children", "Asian men", "girls", "dancers", "fishermen", "monks"];
    const SINGULAR: &[&str] = &["man", "woman", "girl", "child", "person", "dancer", "actress", "monk", "old woman"];

    #[test]
    fn agreement_matches_labelled_words() {
        for w in PLURAL {
            assert!(is_plural_phrase(w), "{w} should be plural");
        }
        for w in SINGULAR {
            assert!(!is_plural_phrase(w), "{w} should be singular");
        }
    }

    #[test]
    fn plural_subject() {
        assert_eq!(
            normalize_object_slot(&q(CLOTHING), &["Asian men".into()]).unwrap(),
            "What type of clothing are the Asian men in the image wearing?"
        );
    }

    #[test]
    fn singular_subject() {
        assert_eq!(
            normalize_object_slot(&q(CLOTHING), &["woman".into()]).unwrap(),
            "What type of clothing is the woman in the image wearing?"
        );
    }

    #[test]
    fn default_people() {
        assert_eq!(
            normalize_object_slot(&q(CLOTHING), &[]).unwrap(),
            "What type of clothing are the people in the image wearing?"
        );
    }

    #[test]
    fn several_phrases_are_plural() {
        assert_eq!(
            normalize_object_slot(&q("What are(is) the {object} wearing in the image?"), &["man".into(), "woman".into()])
                .unwrap(),
            "What are the man and woman wearing in the image?"
        );
    }

    #[test]
    fn no_slot_is_precondition_error() {
        assert!(normalize_object_slot(&q("What food is served?"), &[]).is_err());
    }
}
