//! Text preprocessing: normalization, tokenization, vocabulary construction
//! and fixed-length encoding.
//!
//! Normalization applies, in order: Unicode lowercasing, punctuation removal
//! (general categories P*, replaced by spaces), digit-run replacement
//! (category Nd, each maximal run becomes the literal token `number`), and
//! whitespace collapsing. The result is idempotent.

pub mod dataset;
pub mod vocab;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::Result;

fn punct_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}+").expect("valid regex"))
}

fn digits_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{Nd}+").expect("valid regex"))
}

fn spaces_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").expect("valid regex"))
}

/// Lowercase, strip punctuation, replace digit runs with `number`, collapse
/// whitespace. Total on any UTF-8 input.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let no_punct = punct_re().replace_all(&lower, " ");
    let no_digits = digits_re().replace_all(&no_punct, "number");
    spaces_re().replace_all(&no_digits, " ").trim().to_string()
}

/// Multi-syllable word list for optional compound joining.
///
/// File format: UTF-8 text, one word per line, syllables separated by
/// spaces. Lines are normalized with [`normalize_text`]; lines with fewer
/// than two syllables are ignored.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashSet<String>,
    max_syllables: usize,
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Lexicon> {
        let content = fs::read_to_string(path)?;
        Ok(Self::from_lines(content.lines()))
    }

    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Lexicon {
        let mut entries = HashSet::new();
        let mut max_syllables = 0;
        for line in lines {
            let norm = normalize_text(line);
            let syllables = norm.split(' ').filter(|s| !s.is_empty()).count();
            if syllables >= 2 {
                max_syllables = max_syllables.max(syllables);
                entries.insert(norm);
            }
        }
        Lexicon {
            entries,
            max_syllables,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Split normalized text on spaces; when a lexicon is given, greedily join
/// the longest matching syllable run into one underscore-linked token.
pub fn tokenize(normalized: &str, lexicon: Option<&Lexicon>) -> Vec<String> {
    let syllables: Vec<&str> = normalized.split(' ').filter(|s| !s.is_empty()).collect();
    let Some(lex) = lexicon.filter(|l| !l.is_empty()) else {
        return syllables.into_iter().map(str::to_string).collect();
    };
    let mut out = Vec::with_capacity(syllables.len());
    let mut i = 0;
    while i < syllables.len() {
        let longest = lex.max_syllables.min(syllables.len() - i);
        let mut matched = 0;
        for len in (2..=longest).rev() {
            if lex.entries.contains(&syllables[i..i + len].join(" ")) {
                matched = len;
                break;
            }
        }
        if matched > 0 {
            out.push(syllables[i..i + matched].join("_"));
            i += matched;
        } else {
            out.push(syllables[i].to_string());
            i += 1;
        }
    }
    out
}

/// Normalize and tokenize in one call.
pub fn preprocess(raw: &str, lexicon: Option<&Lexicon>) -> Vec<String> {
    tokenize(&normalize_text(raw), lexicon)
}
