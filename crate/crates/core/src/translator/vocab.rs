use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::anonymizer::all_placeholders;

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

/// Placeholder for the intent name in anonymized programs.
pub const INTENT_NAME_TOKEN: &str = "@intent_name";

/// Structural words and punctuation of the output language.
pub const NILE_WORDS: &[&str] = &[
    "define", "intent", ":", "(", ")", "'", ",", "from", "to", "for", "add", "with", "endpoint",
    "middlebox", "client", "traffic", "flow", "allow", "block", "start", "end", "hour", "date",
    "datetime", "none", "latency", "jitter", "loss", "throughput", "less", "more", "or", "equal",
    "different", "protocol", "src_port", "src_ip", "dest_port", "dest_ip",
];

/// Bijection between words and contiguous indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// Builds a vocabulary in the given order; later duplicates are dropped.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in words {
            let w = w.into();
            if !vocab.index.contains_key(&w) {
                vocab.index.insert(w.clone(), vocab.words.len());
                vocab.words.push(w);
            }
        }
        vocab
    }

    /// Reserved markers, then every entity placeholder, then Nile words.
    pub fn standard() -> Self {
        let words = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(all_placeholders())
            .chain(std::iter::once(INTENT_NAME_TOKEN.to_string()))
            .chain(NILE_WORDS.iter().map(|s| s.to_string()));
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Maps each token to its index; unknown tokens map to [`UNK`].
pub fn index_tokens<S: AsRef<str>>(seq: &[S], vocab: &Vocabulary) -> Vec<usize> {
    seq.iter().map(|t| vocab.get(t.as_ref()).unwrap_or(UNK)).collect()
}
