//! Lexicon-driven entity extraction from operator utterances.
//!
//! The extractor scans the utterance word by word. Context patterns are
//! tried first (`from A to B`, `for client Z`, `for the X`, `N of <metric>`),
//! then the longest lexicon phrase starting at the current word, then
//! value literals such as `10ms`. Everything is deterministic.

mod lexicon;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use lexicon::{LexEntry, LexKind, Lexicon, LexiconError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Middlebox,
    Target,
    Origin,
    Destination,
    Client,
    Metric,
    Constraint,
    Value,
    Traffic,
    RuleAction,
    StartTime,
    EndTime,
}

impl EntityKind {
    pub const ALL: [EntityKind; 12] = [
        EntityKind::Middlebox,
        EntityKind::Target,
        EntityKind::Origin,
        EntityKind::Destination,
        EntityKind::Client,
        EntityKind::Metric,
        EntityKind::Constraint,
        EntityKind::Value,
        EntityKind::Traffic,
        EntityKind::RuleAction,
        EntityKind::StartTime,
        EntityKind::EndTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Middlebox => "middlebox",
            EntityKind::Target => "target",
            EntityKind::Origin => "origin",
            EntityKind::Destination => "destination",
            EntityKind::Client => "client",
            EntityKind::Metric => "metric",
            EntityKind::Constraint => "constraint",
            EntityKind::Value => "value",
            EntityKind::Traffic => "traffic",
            EntityKind::RuleAction => "rule_action",
            EntityKind::StartTime => "start_time",
            EntityKind::EndTime => "end_time",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown entity kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    /// Canonical value, e.g. `ids` for "intrusion detection".
    pub value: String,
    /// Character offset of the match in the utterance.
    pub position: usize,
    /// Lowercased utterance text covered by the match.
    pub surface: String,
}

/// Entities in utterance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntitySet(pub Vec<Entity>);

impl EntitySet {
    pub fn iter(&self) -> std::slice::Iter<'_, Entity> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kinds(&self) -> Vec<EntityKind> {
        self.0.iter().map(|e| e.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("no network entities found in the utterance")]
    EmptyExtraction,
}

static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{L}\p{N}_]+(?:[:.\-][\p{L}\p{N}_]+)*%?").unwrap());
static TIME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2}):(\d{2})$").unwrap());
static VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d+(?:\.\d+)?(?:ms|s|us|bps|kbps|mbps|gbps|%)$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(?:\.\d+)?$").unwrap());
const UNITS: [&str; 8] = ["ms", "s", "us", "bps", "kbps", "mbps", "gbps", "%"];

/// Byte spans of the words in `text`.
pub(crate) fn word_spans(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    WORD.find_iter(text).map(|m| (m.start(), m.end(), m.as_str()))
}

struct Word<'a> {
    lower: String,
    original: &'a str,
    start: usize,
    end: usize,
}

struct Scanner<'a> {
    utterance: &'a str,
    words: Vec<Word<'a>>,
    lexicon: &'a Lexicon,
    found: Vec<Entity>,
}

fn normalize_time(word: &str) -> Option<String> {
    let caps = TIME.captures(word)?;
    let hour: u32 = caps[1].parse().ok()?;
    let minute: u32 = caps[2].parse().ok()?;
    (hour < 24 && minute < 60).then(|| format!("{hour:02}:{minute:02}"))
}

impl<'a> Scanner<'a> {
    fn lower(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(|w| w.lower.as_str())
    }

    fn push(&mut self, kind: EntityKind, value: impl Into<String>, first: usize, last: usize) {
        let start = self.words[first].start;
        let end = self.words[last].end;
        self.found.push(Entity {
            kind,
            value: value.into(),
            position: self.utterance[..start].chars().count(),
            surface: self.utterance[start..end].to_lowercase(),
        });
    }

    fn lex_at(&self, i: usize) -> Option<&'a LexEntry> {
        let lower: Vec<&str> = self.words[i.min(self.words.len())..].iter().map(|w| w.lower.as_str()).collect();
        self.lexicon.longest_match(&lower)
    }

    fn skip_article(&self, i: usize) -> usize {
        match self.lower(i) {
            Some("the" | "a" | "an") => i + 1,
            _ => i,
        }
    }

    /// Value literal at `i`, either fused (`10ms`) or split (`10 ms`).
    /// Returns the canonical literal and the number of words consumed.
    fn value_at(&self, i: usize) -> Option<(String, usize)> {
        let w = self.lower(i)?;
        if VALUE.is_match(w) {
            return Some((w.to_string(), 1));
        }
        if NUMBER.is_match(w) {
            let unit = self.lower(i + 1)?;
            if UNITS.contains(&unit) {
                return Some((format!("{w}{unit}"), 2));
            }
        }
        None
    }

    /// `from A to B` / `between A and B` with two times or two endpoints.
    fn range(&mut self, i: usize) -> Option<usize> {
        enum Side<'e> {
            Time(String, usize),
            Place(&'e LexEntry, usize),
        }
        let side = |s: &Self, j: usize| -> Option<Side<'a>> {
            let j = s.skip_article(j);
            if let Some(t) = s.lower(j).and_then(normalize_time) {
                return Some(Side::Time(t, j));
            }
            match s.lex_at(j) {
                Some(e) if e.kind == LexKind::Endpoint => Some(Side::Place(e, j)),
                _ => None,
            }
        };
        let a = side(self, i + 1)?;
        let after_a = match &a {
            Side::Time(_, j) => j + 1,
            Side::Place(e, j) => j + e.words.len(),
        };
        if !matches!(self.lower(after_a), Some("to" | "and" | "until" | "till")) {
            return None;
        }
        let b = side(self, after_a + 1)?;
        match (a, b) {
            (Side::Time(ta, ja), Side::Time(tb, jb)) => {
                self.push(EntityKind::StartTime, ta, ja, ja);
                self.push(EntityKind::EndTime, tb, jb, jb);
                Some(jb + 1)
            }
            (Side::Place(ea, ja), Side::Place(eb, jb)) => {
                let mut destination = eb.canonical.clone();
                let origin_words: Vec<&str> = ea.canonical.split(' ').collect();
                if eb.words.len() == 1 && !destination.contains(' ') && origin_words.len() > 1 {
                    // "iperf client to server": the bare head noun inherits the qualifier.
                    let qualifier = origin_words[..origin_words.len() - 1].join(" ");
                    destination = format!("{qualifier} {destination}");
                }
                self.push(EntityKind::Origin, ea.canonical.clone(), ja, ja + ea.words.len() - 1);
                self.push(EntityKind::Destination, destination, jb, jb + eb.words.len() - 1);
                Some(jb + eb.words.len())
            }
            _ => None,
        }
    }

    /// `for client Z` or `for [the] <endpoint>`.
    fn for_clause(&mut self, i: usize) -> Option<usize> {
        if matches!(self.lower(i + 1), Some("client" | "clients" | "user" | "host")) {
            let z = i + 2;
            let word = self.words.get(z)?;
            if self.lex_at(z).is_some() {
                return None;
            }
            let value = word.original.to_string();
            self.push(EntityKind::Client, value, z, z);
            return Some(z + 1);
        }
        let j = self.skip_article(i + 1);
        let entry = self.lex_at(j)?;
        if entry.kind != LexKind::Endpoint {
            return None;
        }
        self.push(EntityKind::Target, entry.canonical.clone(), j, j + entry.words.len() - 1);
        Some(j + entry.words.len())
    }

    /// `100mbps of bandwidth` carries an implied constraint on "of".
    fn implied_constraint(&mut self, i: usize) -> bool {
        let n = self.found.len();
        let after_value = n >= 1
            && self.found[n - 1].kind == EntityKind::Value
            && (n < 2 || self.found[n - 2].kind != EntityKind::Constraint);
        if !after_value {
            return false;
        }
        let Some(entry) = self.lex_at(i + 1) else { return false };
        if entry.kind != LexKind::Entity(EntityKind::Metric) {
            return false;
        }
        let constraint = if entry.canonical == "throughput" { "more or equal" } else { "less or equal" };
        self.push(EntityKind::Constraint, constraint, i, i);
        true
    }

    fn run(mut self) -> Vec<Entity> {
        let mut i = 0;
        while i < self.words.len() {
            let w = self.words[i].lower.clone();
            if matches!(w.as_str(), "from" | "between") {
                if let Some(next) = self.range(i) {
                    i = next;
                    continue;
                }
            }
            if w == "for" {
                if let Some(next) = self.for_clause(i) {
                    i = next;
                    continue;
                }
            }
            if w == "of" && self.implied_constraint(i) {
                i += 1;
                continue;
            }
            if let Some(entry) = self.lex_at(i) {
                let kind = match entry.kind {
                    LexKind::Entity(k) => k,
                    LexKind::Endpoint => EntityKind::Target,
                };
                let last = i + entry.words.len() - 1;
                self.push(kind, entry.canonical.clone(), i, last);
                i = last + 1;
                continue;
            }
            if let Some((value, used)) = self.value_at(i) {
                self.push(EntityKind::Value, value, i, i + used - 1);
                i += used;
                continue;
            }
            i += 1;
        }
        self.found.sort_by_key(|e| e.position);
        self.found
    }
}

/// Extract network entities from a natural-language utterance.
pub fn extract_entities(utterance: &str, lexicon: &Lexicon) -> Result<EntitySet, ExtractError> {
    if utterance.trim().is_empty() {
        return Err(ExtractError::EmptyUtterance);
    }
    let words = word_spans(utterance)
        .map(|(start, end, original)| Word {
            lower: original.to_lowercase(),
            original,
            start,
            end,
        })
        .collect();
    let found = Scanner {
        utterance,
        words,
        lexicon,
        found: Vec::new(),
    }
    .run();
    if found.is_empty() {
        return Err(ExtractError::EmptyExtraction);
    }
    Ok(EntitySet(found))
}
