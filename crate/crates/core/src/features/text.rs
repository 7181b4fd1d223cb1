use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::stopwords::is_stop_word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanMode {
    /// HTML tags removed, nothing else touched.
    EmbeddingClean,
    /// Lowercased bag of words without digits, punctuation or stop words.
    BowClean,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanedText {
    Text(String),
    Tokens(Vec<String>),
}

fn tag_pattern() -> &'static Regex {
    static TAG: OnceLock<Regex> = OnceLock::new();
    TAG.get_or_init(|| Regex::new(r"<[^<>]*>").expect("valid regex"))
}

/// Removes HTML tags.
pub fn strip_html(text: &str) -> String {
    tag_pattern().replace_all(text, "").into_owned()
}

/// Bag-of-words tokenization: tags, digits and punctuation become
/// separators, tokens are lowercased and stop words dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let no_tags = tag_pattern().replace_all(text, " ");
    let lowered = no_tags.to_lowercase();
    let spaced: String = lowered
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    spaced
        .split_whitespace()
        .filter(|w| !is_stop_word(w))
        .map(str::to_owned)
        .collect()
}

pub fn clean_text(text: &str, mode: CleanMode) -> CleanedText {
    match mode {
        CleanMode::EmbeddingClean => CleanedText::Text(strip_html(text)),
        CleanMode::BowClean => CleanedText::Tokens(tokenize(text)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_clean_only_strips_tags() {
        assert_eq!(
            clean_text("<b>Fix</b> net 42!", CleanMode::EmbeddingClean),
            CleanedText::Text("Fix net 42!".into())
        );
    }

    #[test]
    fn bow_clean() {
        assert_eq!(
            clean_text("<b>Fix</b> net 42!", CleanMode::BowClean),
            CleanedText::Tokens(vec!["fix".into(), "net".into()])
        );
        assert_eq!(
            tokenize("The parity-check FAILED on core3, see log."),
            vec!["parity", "check", "failed", "core", "log"]
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(
            clean_text("", CleanMode::EmbeddingClean),
            CleanedText::Text(String::new())
        );
        assert_eq!(
            clean_text("", CleanMode::BowClean),
            CleanedText::Tokens(vec![])
        );
    }
}
