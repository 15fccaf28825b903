//! Tokenization shared by landmark lookup, cue extraction and description synthesis.

/// Function words ignored by fuzzy landmark lookup.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "of", "on", "in", "at", "to", "by", "near", "and", "or", "is", "it", "its", "this", "that", "with",
    "from", "for",
];

/// Lowercased alphanumeric tokens; every other character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(&token)
}

/// Tokens with stop words removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_stop_word(t)).collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
