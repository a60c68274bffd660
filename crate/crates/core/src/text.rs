//! Minimal tokenizer and stopword-based FR/EN language guess.

use serde::{Deserialize, Serialize};

/// Whitespace-delimited tokens with leading and trailing non-alphanumeric
/// characters stripped, lowercased, typographic apostrophes folded to `'`.
/// Tokens that strip to nothing are dropped.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(normalize_token)
}

pub fn normalize_token(raw: &str) -> Option<String> {
    let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if t.is_empty() {
        return None;
    }
    Some(t.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase())
}

/// Raw whitespace token count, the word count used throughout the metrics.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Fr,
    En,
    Unknown,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Fr, Language::En, Language::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Fr => "fr",
            Language::En => "en",
            Language::Unknown => "unknown",
        }
    }
}

pub const FRENCH_STOPWORDS: &[&str] = &[
    "je", "j'ai", "tu", "il", "elle", "nous", "vous", "ils", "elles", "le", "la", "les",
    "un", "une", "des", "du", "de", "au", "aux", "et", "ou", "mais", "donc", "que", "qui",
    "quoi", "est", "c'est", "sont", "suis", "était", "pas", "ne", "n'est", "ce", "cette",
    "ces", "mon", "ma", "mes", "ton", "ta", "son", "sa", "ses", "notre", "votre", "leur",
    "pour", "avec", "dans", "sur", "par", "très", "aussi", "oui", "non", "comme", "avoir",
    "être", "fait", "qu'il", "parce", "tout", "tous", "à",
];

pub const ENGLISH_STOPWORDS: &[&str] = &[
    "the", "a", "an", "i", "i'm", "you", "he", "she", "we", "they", "it", "it's", "is", "are",
    "was", "were", "be", "been", "am", "and", "or", "but", "so", "that", "this", "these",
    "those", "of", "to", "in", "on", "at", "for", "with", "not", "don't", "do", "does", "did",
    "have", "has", "had", "my", "your", "his", "her", "our", "their", "what", "which", "who",
    "there", "if", "because", "very", "just", "can", "will", "would", "yes", "no",
];

/// Classifies by counting stopword hits per language; a tie (including no
/// hits at all) is `Unknown`.
pub fn classify_language(text: &str) -> Language {
    let (mut fr, mut en) = (0usize, 0usize);
    for token in tokens(text) {
        if FRENCH_STOPWORDS.contains(&token.as_str()) {
            fr += 1;
        }
        if ENGLISH_STOPWORDS.contains(&token.as_str()) {
            en += 1;
        }
    }
    match fr.cmp(&en) {
        std::cmp::Ordering::Greater => Language::Fr,
        std::cmp::Ordering::Less => Language::En,
        std::cmp::Ordering::Equal => Language::Unknown,
    }
}
