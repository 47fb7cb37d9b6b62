//! Replaces extracted entity values with kind placeholders (`@middlebox`,
//! `@middlebox#2`, ...) and restores them in translated programs.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::extractor::{EntityKind, EntitySet};

/// Placeholder tokens per kind are `@kind`, `@kind#2`, ..., `@kind#MAX_REPEATS`.
pub const MAX_REPEATS: usize = 4;

pub type TokenSequence = Vec<String>;

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[a-z_]+(?:#[0-9]+)?").unwrap());

/// Placeholder for the `n`-th (1-based) occurrence of `kind`.
pub fn placeholder(kind: EntityKind, n: usize) -> String {
    if n <= 1 {
        format!("@{}", kind.as_str())
    } else {
        format!("@{}#{n}", kind.as_str())
    }
}

/// Every placeholder the translator vocabulary must know about.
pub fn all_placeholders() -> impl Iterator<Item = String> {
    EntityKind::ALL
        .into_iter()
        .flat_map(|k| (1..=MAX_REPEATS).map(move |n| placeholder(k, n)))
}

/// Token-to-value bindings for one utterance, in entity order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pairs: Vec<(String, String)>,
}

impl AnonymizationMap {
    pub fn get(&self, token: &str) -> Option<&str> {
        self.pairs.iter().find(|(t, _)| t == token).map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds a binding outside the entity set, e.g. the intent name.
    pub fn bind(&mut self, token: impl Into<String>, value: impl Into<String>) {
        let token = token.into();
        let value = value.into();
        match self.pairs.iter_mut().find(|(t, _)| *t == token) {
            Some(pair) => pair.1 = value,
            None => self.pairs.push((token, value)),
        }
    }

    /// Reverse lookup that hands out tokens in binding order, so repeated
    /// equal values (two `less` constraints) map back to distinct tokens.
    pub fn reverse(&self) -> ReverseLookup<'_> {
        let mut by_value: HashMap<&str, Vec<&str>> = HashMap::new();
        for (t, v) in &self.pairs {
            by_value.entry(v.as_str()).or_default().push(t.as_str());
        }
        for tokens in by_value.values_mut() {
            tokens.reverse();
        }
        ReverseLookup { by_value }
    }
}

pub struct ReverseLookup<'a> {
    by_value: HashMap<&'a str, Vec<&'a str>>,
}

impl<'a> ReverseLookup<'a> {
    /// Next unused token bound to `value`.
    pub fn take(&mut self, value: &str) -> Option<&'a str> {
        self.by_value.get_mut(value)?.pop()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnonymizeError {
    #[error("more than {MAX_REPEATS} entities of kind `{0}` in one intent")]
    TooManyRepeats(EntityKind),
    #[error("translation references `{0}`, which was not extracted from the utterance")]
    UnboundToken(String),
}

/// The i-th entity of kind k becomes `@k`, with suffix `#n` on the n-th repeat.
pub fn anonymize(entities: &EntitySet) -> Result<(TokenSequence, AnonymizationMap), AnonymizeError> {
    let mut counts: HashMap<EntityKind, usize> = HashMap::new();
    let mut sequence = Vec::with_capacity(entities.len());
    let mut map = AnonymizationMap::default();
    for entity in entities.iter() {
        let n = counts.entry(entity.kind).or_default();
        *n += 1;
        if *n > MAX_REPEATS {
            return Err(AnonymizeError::TooManyRepeats(entity.kind));
        }
        let token = placeholder(entity.kind, *n);
        map.pairs.push((token.clone(), entity.value.clone()));
        sequence.push(token);
    }
    Ok((sequence, map))
}

/// Substitute every placeholder in `program` with its bound value.
///
/// The token pattern matches the longest form, so `@middlebox#2` is never
/// split into `@middlebox` + `#2`.
pub fn deanonymize(program: &str, map: &AnonymizationMap) -> Result<String, AnonymizeError> {
    if let Some(unbound) = TOKEN.find_iter(program).find(|m| map.get(m.as_str()).is_none()) {
        return Err(AnonymizeError::UnboundToken(unbound.as_str().to_string()));
    }
    Ok(TOKEN
        .replace_all(program, |caps: &Captures| map.get(&caps[0]).unwrap_or_default().to_string())
        .into_owned())
}

/// Placeholders occurring in `text`, in order.
pub fn placeholders_in(text: &str) -> Vec<&str> {
    TOKEN.find_iter(text).map(|m| m.as_str()).collect()
}
