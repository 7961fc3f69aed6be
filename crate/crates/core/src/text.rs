//! Word-level text handling shared by the tokenizer, the lexical oracle and
//! the similarity metrics.

use alloc::string::String;
use alloc::vec::Vec;

/// Negation cues checked by the lexical oracle. Any token ending in `n't`
/// also counts.
pub const NEGATION_CUES: [&str; 6] = ["not", "no", "never", "n't", "without", "cannot"];

/// Function words ignored when measuring lexical overlap. Negation cues are
/// listed here too; they are tracked separately.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "being", "but", "by", "can", "cannot", "could", "did", "do", "does",
    "doing", "for", "from", "had", "has", "have", "he", "her", "here", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "just", "may", "me", "might", "more", "most", "my",
    "never", "no", "not", "now", "of", "on", "or", "our", "out", "she", "should", "so", "some",
    "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "to", "too", "up", "us", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "will", "with", "without", "would", "you", "your",
];

/// Splits text into lowercased word tokens.
///
/// A token is a maximal run of alphanumeric characters, optionally joined by
/// single inner apostrophes (`don't`). Everything else, including `#`, `-`
/// and sentence punctuation, separates tokens and is dropped.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if (c == '\'' || c == '\u{2019}')
            && !current.is_empty()
            && chars.peek().is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            out.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

pub fn is_negation(token: &str) -> bool {
    NEGATION_CUES.contains(&token) || token.ends_with("n't")
}

/// Lowercased tokens that are neither stopwords nor negation cues.
pub fn content_tokens(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|t| !is_stopword(t) && !is_negation(t))
        .collect()
}

pub fn has_negation(text: &str) -> bool {
    words(text).iter().any(|t| is_negation(t))
}

/// Trims and collapses every internal whitespace run to a single space.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, w) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Number of whitespace-separated words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
