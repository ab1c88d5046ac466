//! Shared text helpers: the metric tokenizer and the pluggable length counter.

use std::sync::OnceLock;

use regex::Regex;

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").expect("static regex"))
}

/// Lowercases and splits on whitespace and punctuation boundaries; every
/// punctuation character becomes its own token.
///
/// This is the tokenization used by BLEU, ROUGE-L and the soft matchers.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    word_re()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Counts tokens for the length filter.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Whitespace token counter. Counts differ from subword tokenizers, which
/// usually report more tokens for the same text.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

impl<F> TokenCounter for F
where
    F: Fn(&str) -> usize + Send + Sync,
{
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

/// Whitespace-collapsed, lowercased form used for duplicate detection.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_splits() {
        assert_eq!(
            metric_tokens("[Answer]: Paris: LOC;"),
            vec!["[", "answer", "]", ":", "paris", ":", "loc", ";"]
        );
        assert!(metric_tokens("   ").is_empty());
    }

    #[test]
    fn whitespace_counter() {
        assert_eq!(WhitespaceTokenizer.count("a  b\nc"), 3);
        let closure = |t: &str| t.len();
        assert_eq!(closure.count("abcd"), 4);
    }

    #[test]
    fn normalization_collapses() {
        assert_eq!(normalize("  Extract   ALL\tentities "), "extract all entities");
    }
}
