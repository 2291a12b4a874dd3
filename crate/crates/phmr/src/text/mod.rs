//! Text utilities: whitespace tokenization shared by statistics, rule
//! baselines, and frequency reports, plus the subword vocabulary.

pub mod vocab;

/// Number of whitespace-separated tokens.
pub fn whitespace_token_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Lowercased whitespace-separated words with surrounding punctuation
/// stripped. Words that are pure punctuation disappear.
pub fn lower_words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}
