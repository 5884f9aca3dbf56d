use std::collections::HashMap;

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];
/// Reserved tokens followed by one token per emotion.
pub const NUM_SPECIAL: usize = RESERVED.len() + NUM_EMOTIONS;

/// Token/id bijection. Ids `0..4` are PAD, BOS, EOS and UNK, ids
/// `4..14` are the emotion tokens in emotion-id order, then corpus tokens
/// by descending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn specials() -> Vec<String> {
        RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(Emotion::ALL.iter().map(|e| e.token()))
            .collect()
    }

    pub fn build<'a, I, S>(texts: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if cap < NUM_SPECIAL {
            return Err(Error::contract(format!(
                "vocabulary cap {cap} is below the {NUM_SPECIAL} reserved tokens"
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for text in texts {
            any = true;
            for tok in text {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut tokens = Self::specials();
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !tokens.iter().any(|s| s == t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        tokens.extend(
            ranked
                .into_iter()
                .take(cap - NUM_SPECIAL)
                .map(|(t, _)| t.to_string()),
        );
        Ok(Self::from_tokens_unchecked(tokens))
    }

    fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Rebuilds a vocabulary from its ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let specials = Self::specials();
        if tokens.len() < NUM_SPECIAL || tokens[..NUM_SPECIAL] != specials[..] {
            return Err(Error::Data("token list does not start with the reserved tokens".into()));
        }
        let vocab = Self::from_tokens_unchecked(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Data("duplicate token in vocabulary".into()));
        }
        Ok(vocab)
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

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn emotion_id(&self, e: Emotion) -> usize {
        RESERVED.len() + e.index()
    }

    /// The emotion whose token has this id, if any.
    pub fn emotion_of(&self, id: usize) -> Option<Emotion> {
        id.checked_sub(RESERVED.len()).and_then(Emotion::from_index)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>").to_string())
            .collect()
    }
}
