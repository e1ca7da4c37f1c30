//! Text-to-text representation of sentence labels and token spans.

mod align;
mod dump;
mod spans;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CanonicalLabel, Scheme, PREFIX_SEPARATOR};

pub use align::{align_tokens, TokenAlignment};
pub use dump::{read_predictions, write_predictions, PredictionRecord};
pub use spans::CharSpanSet;

/// Marker placed before every offensive token in token-level targets.
pub const OFF_MARKER: &str = "[OFF]";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("span index {index} out of range for text of {len} characters")]
    SpanOutOfRange { index: usize, len: usize },
    #[error("malformed span list `{0}`")]
    SpanSyntax(String),
    #[error("prefix `{prefix}` requires scheme {expected}, got a {got} label")]
    PrefixScheme { prefix: String, expected: Scheme, got: Scheme },
    #[error("text contains the reserved marker `{OFF_MARKER}`")]
    ReservedMarker,
    #[error("invalid prefix `{0}`")]
    Prefix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "SENTENCE")]
    Sentence,
    #[serde(rename = "TOKEN")]
    Token,
}

/// A prefix-tagged (input, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CuratedExample {
    pub id: String,
    /// Corpus the example was curated from.
    pub source: String,
    pub prefix: String,
    pub task: TaskKind,
    pub input_text: String,
    pub target_text: String,
    pub original_text: String,
    /// Gold character offsets for token-level examples, before dilation.
    pub gold_spans: Option<CharSpanSet>,
}

/// A whitespace-delimited token with its half-open character range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    /// Byte offset of the token in its text.
    pub byte_start: usize,
}

/// Split on Unicode whitespace, tracking character offsets.
pub fn whitespace_tokens(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (char start, byte start)
    let mut chars = 0;
    for (byte, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some((start, byte_start)) = current.take() {
                tokens.push(Token { text: &text[byte_start..byte], start, end: chars, byte_start });
            }
        } else if current.is_none() {
            current = Some((chars, byte));
        }
        chars += 1;
    }
    if let Some((start, byte_start)) = current {
        tokens.push(Token { text: &text[byte_start..], start, end: chars, byte_start });
    }
    tokens
}

fn with_prefix(prefix: &str, text: &str) -> Result<String, CodecError> {
    if prefix.is_empty() || prefix.chars().any(char::is_whitespace) {
        return Err(CodecError::Prefix(prefix.to_string()));
    }
    Ok(format!("{prefix}{PREFIX_SEPARATOR}{text}"))
}

pub fn encode_sentence(prefix: &str, text: &str, label: CanonicalLabel) -> Result<CuratedExample, CodecError> {
    if let Ok(expected) = prefix.parse::<Scheme>() {
        if expected != label.scheme() {
            return Err(CodecError::PrefixScheme { prefix: prefix.to_string(), expected, got: label.scheme() });
        }
    }
    Ok(CuratedExample {
        id: String::new(),
        source: String::new(),
        prefix: prefix.to_string(),
        task: TaskKind::Sentence,
        input_text: with_prefix(prefix, text)?,
        target_text: label.value().as_str().to_string(),
        original_text: text.to_string(),
        gold_spans: None,
    })
}

/// Parse a generated label. Unrecognised output falls back to the scheme's
/// negative class with `parse_ok = false`.
pub fn decode_sentence(output_text: &str, scheme: Scheme) -> (CanonicalLabel, bool) {
    let trimmed = output_text.trim();
    scheme
        .labels()
        .into_iter()
        .find(|v| v.as_str().eq_ignore_ascii_case(trimmed))
        .map(|v| (CanonicalLabel::new(v, scheme).expect("scheme admits its own labels"), true))
        .unwrap_or((CanonicalLabel::negative(scheme), false))
}

/// Character set covering every token that `spans` touches.
pub fn dilate_to_tokens(text: &str, spans: &CharSpanSet) -> CharSpanSet {
    let mut out = CharSpanSet::new();
    for tok in whitespace_tokens(text) {
        if spans.intersects_range(tok.start, tok.end) {
            out.insert_range(tok.start, tok.end);
        }
    }
    out
}

/// Target text with `"[OFF] "` inserted before each token intersecting `spans`.
pub fn encode_token(prefix: &str, text: &str, spans: &CharSpanSet) -> Result<CuratedExample, CodecError> {
    spans.check_within(text.chars().count())?;
    let tokens = whitespace_tokens(text);
    if tokens.iter().any(|t| t.text == OFF_MARKER) {
        return Err(CodecError::ReservedMarker);
    }
    let mut target = String::with_capacity(text.len() + 6 * tokens.len());
    let mut cursor = 0;
    for tok in &tokens {
        if spans.intersects_range(tok.start, tok.end) {
            target.push_str(&text[cursor..tok.byte_start]);
            target.push_str(OFF_MARKER);
            target.push(' ');
            cursor = tok.byte_start;
        }
    }
    target.push_str(&text[cursor..]);
    Ok(CuratedExample {
        id: String::new(),
        source: String::new(),
        prefix: prefix.to_string(),
        task: TaskKind::Token,
        input_text: with_prefix(prefix, text)?,
        target_text: target,
        original_text: text.to_string(),
        gold_spans: Some(spans.clone()),
    })
}

/// Recover character offsets from a marked generation.
///
/// Markers attach to the next non-marker token. A marker with no following
/// token, a repeated marker, or any output token left unaligned to the
/// original sets `parse_ok = false`.
pub fn decode_token(output_text: &str, original_text: &str) -> (CharSpanSet, bool) {
    let mut ok = true;
    let mut words: Vec<&str> = Vec::new();
    let mut marked: Vec<bool> = Vec::new();
    let mut pending = false;
    for tok in output_text.split_whitespace() {
        if tok == OFF_MARKER {
            if pending {
                ok = false;
            }
            pending = true;
        } else {
            words.push(tok);
            marked.push(pending);
            pending = false;
        }
    }
    if pending {
        ok = false;
    }

    let original = whitespace_tokens(original_text);
    let original_words: Vec<&str> = original.iter().map(|t| t.text).collect();
    let alignment = align_tokens(&words, &original_words);
    if !alignment.unmatched_output.is_empty() {
        ok = false;
    }
    let mut spans = CharSpanSet::new();
    for &(o, g) in &alignment.pairs {
        if marked[o] {
            spans.insert_range(original[g].start, original[g].end);
        }
    }
    (spans, ok)
}

/// Original characters of the given word indices (word-level annotations).
pub fn words_to_char_spans(text: &str, word_indices: &[usize]) -> CharSpanSet {
    let mut spans = CharSpanSet::new();
    for (k, tok) in whitespace_tokens(text).iter().enumerate() {
        if word_indices.contains(&k) {
            spans.insert_range(tok.start, tok.end);
        }
    }
    spans
}

/// Indices of the words touched by `spans`.
pub fn char_spans_to_words(text: &str, spans: &CharSpanSet) -> CharSpanSet {
    whitespace_tokens(text)
        .iter()
        .enumerate()
        .filter(|(_, t)| spans.intersects_range(t.start, t.end))
        .map(|(k, _)| k)
        .collect()
}
