//! Tokenization and vocabularies shared by the labeler, the text encoder
//! and prompt handling.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::encoders::TokenSequence;
use crate::error::{Error, Result};

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

pub const UNKNOWN_TOKEN: &str = "[unk]";

/// Word list with id 0 reserved for [`UNKNOWN_TOKEN`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// Sorted unique tokens of `texts`, after the unknown token.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let mut words = vec![UNKNOWN_TOKEN.to_string()];
        words.extend(set.into_iter().filter(|w| w != UNKNOWN_TOKEN));
        words.into()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Encodes `text`, mapping unknown words to id 0 and truncating to
    /// `max_length`. An empty text becomes a single unknown token.
    pub fn encode_lossy(&self, text: &str, max_length: usize) -> TokenSequence {
        let mut ids: Vec<usize> = tokenize(text)
            .iter()
            .map(|w| self.id(w).unwrap_or(0))
            .take(max_length.max(1))
            .collect();
        if ids.is_empty() {
            ids.push(0);
        }
        TokenSequence::from_ids_unchecked(ids)
    }

    /// Encodes `text`, failing on the first word outside the vocabulary.
    pub fn encode_strict(&self, text: &str, max_length: usize) -> Result<TokenSequence> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(Error::Consistency(format!("prompt {text:?} has no tokens")));
        }
        let ids = words
            .iter()
            .take(max_length.max(1))
            .map(|w| {
                self.id(w).ok_or_else(|| Error::UnknownWord {
                    word: w.clone(),
                    prompt: text.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenSequence::from_ids_unchecked(ids))
    }
}
