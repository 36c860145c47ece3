// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexical contradiction and hedging flags for generated responses.

use serde::{Deserialize, Serialize};

/// Marker tables shipped with the crate.
pub const DEFAULT_MARKERS_TOML: &str = include_str!("../data/markers_v1.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerTables {
    pub version: u32,
    pub affirmative: Vec<String>,
    pub negative: Vec<String>,
    pub hedging: Vec<String>,
}

impl Default for MarkerTables {
    fn default() -> Self {
        Self::from_toml(DEFAULT_MARKERS_TOML).expect("bundled marker tables parse")
    }
}

impl MarkerTables {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ResponseFlags {
    pub contradiction: bool,
    pub hedging_count: usize,
    pub explanation_length: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Affirmative,
    Negative,
    Hedging,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'')).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Flags a response using the given marker tables.
pub fn classify_response_with(text: &str, markers: &MarkerTables) -> ResponseFlags {
    let mut phrases: Vec<(Vec<String>, Kind)> = Vec::new();
    for (list, kind) in [
        (&markers.affirmative, Kind::Affirmative),
        (&markers.negative, Kind::Negative),
        (&markers.hedging, Kind::Hedging),
    ] {
        phrases.extend(list.iter().map(|p| (words(p), kind)).filter(|(w, _)| !w.is_empty()));
    }
    // longest first; stable sort keeps table order among equal lengths
    phrases.sort_by_key(|p| std::cmp::Reverse(p.0.len()));

    let toks = words(text);
    let (mut aff, mut neg, mut hedge) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < toks.len() {
        let hit = phrases.iter().find(|(p, _)| toks.len() - i >= p.len() && toks[i..i + p.len()] == p[..]);
        match hit {
            Some((p, kind)) => {
                match kind {
                    Kind::Affirmative => aff += 1,
                    Kind::Negative => neg += 1,
                    Kind::Hedging => hedge += 1,
                }
                i += p.len();
            }
            None => i += 1,
        }
    }
    ResponseFlags {
        contradiction: aff > 0 && neg > 0,
        hedging_count: hedge,
        explanation_length: text.split_whitespace().count(),
    }
}

/// Flags a response using the bundled marker tables.
pub fn classify_response(text: &str) -> ResponseFlags {
    static DEFAULT: std::sync::OnceLock<MarkerTables> = std::sync::OnceLock::new();
    classify_response_with(text, DEFAULT.get_or_init(MarkerTables::default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_markers() {
        let f = classify_response("Paris is the capital of France.");
        assert!(!f.contradiction);
        assert_eq!(f.hedging_count, 0);
        assert_eq!(f.explanation_length, 6);
    }

    #[test]
    fn co_occurrence_is_contradiction() {
        assert!(classify_response("It is true, but it is also not true.").contradiction);
        assert!(classify_response("Yes. Well, that is not true, and yet it is true").contradiction);
        assert!(!classify_response("Yes, that is correct.").contradiction);
    }

    #[test]
    fn longest_hedge_consumes_negative_prefix() {
        let f = classify_response("This is a paradox; it cannot be determined.");
        assert_eq!(f.hedging_count, 2);
        assert!(!f.contradiction);
        // the bare negative still counts
        assert!(classify_response("True, yet it cannot be.").contradiction);
    }

    #[test]
    fn whole_word_and_case_insensitive() {
        // "Note" and "untrue" contain markers only as substrings
        let f = classify_response("Note: untrue? TRUE.");
        assert!(!f.contradiction);
        assert!(classify_response("TRUE. No.").contradiction);
    }

    #[test]
    fn empty_text() {
        assert_eq!(classify_response(""), ResponseFlags::default());
    }

    #[test]
    fn bundled_tables_version() {
        let m = MarkerTables::default();
        assert_eq!(m.version, 1);
        assert_eq!(m.hedging.len(), 6);
    }
}
