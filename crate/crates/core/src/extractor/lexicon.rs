use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use super::{word_spans, EntityKind};

/// What a lexicon phrase denotes. Endpoints are resolved to origin,
/// destination or target from their context in the utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexKind {
    Entity(EntityKind),
    Endpoint,
}

impl FromStr for LexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "endpoint" {
            return Ok(LexKind::Endpoint);
        }
        s.parse::<EntityKind>().map(LexKind::Entity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub words: Vec<String>,
    pub kind: LexKind,
    pub canonical: String,
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

/// Synonym table mapping lowercase surface phrases to entity kinds and
/// canonical values.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    /// Keyed by first word; each bucket sorted longest phrase first.
    by_first_word: HashMap<String, Vec<LexEntry>>,
}

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

impl Lexicon {
    /// The lexicon shipped in `data/lexicon.tsv`.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let malformed = |message: String| LexiconError::Malformed { line: idx + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [phrase, kind, canonical] = fields[..] else {
                return Err(malformed(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let kind: LexKind = kind.trim().parse().map_err(malformed)?;
            let canonical = canonical.trim();
            if canonical.is_empty() {
                return Err(malformed("empty canonical value".into()));
            }
            lexicon
                .insert(phrase, kind, canonical)
                .map_err(|m| malformed(m.to_string()))?;
        }
        Ok(lexicon)
    }

    pub fn insert(&mut self, phrase: &str, kind: LexKind, canonical: &str) -> Result<(), &'static str> {
        let lower = phrase.to_lowercase();
        let words: Vec<String> = word_spans(&lower).map(|(_, _, w)| w.to_string()).collect();
        if words.is_empty() {
            return Err("empty phrase");
        }
        let bucket = self.by_first_word.entry(words[0].clone()).or_default();
        bucket.retain(|e| e.words != words);
        bucket.push(LexEntry {
            words,
            kind,
            canonical: canonical.to_string(),
        });
        bucket.sort_by_key(|e| std::cmp::Reverse(e.words.len()));
        Ok(())
    }

    /// Longest entry whose words match `words` starting at index 0.
    pub fn longest_match(&self, words: &[&str]) -> Option<&LexEntry> {
        let first = words.first()?;
        self.by_first_word.get(*first)?.iter().find(|e| {
            e.words.len() <= words.len() && e.words.iter().zip(words).all(|(a, b)| a == b)
        })
    }

    pub fn len(&self) -> usize {
        self.by_first_word.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads() {
        let lex = Lexicon::builtin();
        assert!(lex.len() > 50);
        let hit = lex.longest_match(&["intrusion", "detection", "system", "now"]).unwrap();
        assert_eq!(hit.canonical, "ids");
        assert_eq!(hit.words.len(), 3);
    }

    #[test]
    fn longest_phrase_wins() {
        let lex = Lexicon::parse("intrusion\tmiddlebox\tintrusion\nintrusion detection\tmiddlebox\tids\n").unwrap();
        assert_eq!(lex.longest_match(&["intrusion", "detection"]).unwrap().canonical, "ids");
        assert_eq!(lex.longest_match(&["intrusion", "alarm"]).unwrap().canonical, "intrusion");
    }

    #[test]
    fn phrases_are_lowercased() {
        let lex = Lexicon::parse("IDS\tmiddlebox\tids").unwrap();
        assert!(lex.longest_match(&["ids"]).is_some());
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = Lexicon::parse("# header\nfirewall\tmiddlebox").unwrap_err();
        assert!(matches!(err, LexiconError::Malformed { line: 2, .. }));
        assert!(Lexicon::parse("firewall\tgizmo\tfw").is_err());
    }
}
