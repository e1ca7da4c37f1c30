use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::codec::{CuratedExample, OFF_MARKER};
use crate::corpus::{LabelValue, PREFIX_SEPARATOR, REGISTERED_PREFIXES};

pub const PAD: &str = "<pad>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";

/// Whitespace-token vocabulary. Reserved tokens occupy the lowest ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub const PAD_ID: u32 = 0;
    pub const EOS_ID: u32 = 1;
    pub const UNK_ID: u32 = 2;
    pub const BOS_ID: u32 = 3;
    pub const OFF_ID: u32 = 4;

    /// Reserved tokens in id order: specials, the span marker, one token per
    /// registered prefix as it appears in input text (`OLID_A:`), then the
    /// sentence label words.
    pub fn reserved() -> Vec<String> {
        let mut out: Vec<String> = [PAD, EOS, UNK, BOS, OFF_MARKER].iter().map(|s| s.to_string()).collect();
        out.extend(REGISTERED_PREFIXES.iter().map(|p| prefix_token(p)));
        out.extend([LabelValue::Off, LabelValue::Not, LabelValue::Tox].iter().map(|v| v.as_str().to_string()));
        out
    }

    pub fn n_reserved() -> usize {
        Self::reserved().len()
    }

    /// Reserved tokens plus every whitespace token of inputs and targets seen
    /// at least `min_count` times, ordered by descending count then token.
    pub fn build(corpus: &[CuratedExample], min_count: usize) -> Self {
        if corpus.is_empty() {
            warn!("building a vocabulary from an empty corpus");
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ex in corpus {
            for tok in ex.input_text.split_whitespace().chain(ex.target_text.split_whitespace()) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let reserved = Self::reserved();
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, c)| c >= min_count.max(1) && !reserved.iter().any(|r| r == tok))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = reserved.into_iter().chain(kept.into_iter().map(|(t, _)| t.to_string())).collect();
        Self::from_tokens(tokens).expect("reserved and corpus tokens are distinct")
    }

    /// Vocabulary from an id-ordered token list, which must begin with
    /// [`Vocab::reserved`] and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, ModelError> {
        let reserved = Self::reserved();
        if tokens.len() < reserved.len() || tokens[..reserved.len()] != reserved[..] {
            return Err(ModelError::Config("vocabulary does not start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(ModelError::Config(format!("invalid vocabulary token {tok:?}")));
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(ModelError::Config(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_reserved(id: u32) -> bool {
        (id as usize) < Self::n_reserved()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|t| self.id(t)).collect()
    }

    /// Tokens joined by single spaces; PAD, BOS and EOS are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, Self::PAD_ID | Self::BOS_ID | Self::EOS_ID))
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Number of whitespace tokens of `text` that map to UNK.
    pub fn unknown_count(&self, text: &str) -> usize {
        text.split_whitespace().filter(|t| self.get(t).is_none()).count()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = ModelError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// The input-text token carrying a task prefix, e.g. `OLID_A:`.
pub fn prefix_token(prefix: &str) -> String {
    format!("{prefix}{}", PREFIX_SEPARATOR.trim_end())
}

pub fn build_vocab(corpus: &[CuratedExample], min_count: usize) -> Vocab {
    Vocab::build(corpus, min_count)
}
