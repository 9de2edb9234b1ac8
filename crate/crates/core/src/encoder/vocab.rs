use std::collections::HashMap;

use crate::error::{Error, Result};

pub const UNK_ID: u32 = 0;
pub const UNK_TOKEN: &str = "[unk]";

/// Token-to-id table. Id 0 is always the unknown token; the remaining ids are
/// dense and ordered by (frequency descending, token ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    min_freq: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list. The first token
    /// must be the unknown token.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::Format("vocabulary must start with the unknown token".into()));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("invalid or repeated vocabulary token `{t}`")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // UNK is always present.
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }
}

/// Lowercased alphanumeric runs of `text`.
pub fn words(text: &str) -> Vec<String> {
    // Lowercase before splitting: lowercasing can introduce non-alphanumeric
    // marks (U+0130 -> "i\u{307}").
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn build_vocab<'a, I>(texts: I, min_freq: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    if min_freq == 0 {
        return Err(Error::InvalidArgument("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for w in words(text) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, n)| *n >= min_freq && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = std::iter::once(UNK_TOKEN.to_string())
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens, min_freq)
}

/// Token ids of a text, truncated to `max_seq_len`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenIds(pub Vec<u32>);

impl TokenIds {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn tokenize(text: &str, vocab: &Vocabulary, max_seq_len: usize) -> TokenIds {
    TokenIds(
        words(text)
            .into_iter()
            .take(max_seq_len)
            .map(|w| vocab.id(&w))
            .collect(),
    )
}
