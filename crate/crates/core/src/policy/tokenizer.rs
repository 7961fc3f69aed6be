use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text;

pub type TokenId = usize;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const SEP: TokenId = 3;

pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<unk>", "<sep>"];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("max_vocab {0} leaves no room beyond the 4 reserved tokens")]
    VocabTooSmall(usize),
    #[error("vocabulary entry {0:?} is not a single word token")]
    InvalidEntry(String),
}

/// Word-level vocabulary with reserved tokens at indices 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

impl Tokenizer {
    /// Reserved tokens followed by the `max_vocab - 4` most frequent word
    /// tokens, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_vocab: usize) -> Result<Tokenizer, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        if max_vocab <= RESERVED.len() {
            return Err(TokenizerError::VocabTooSmall(max_vocab));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            for w in text::words(doc.as_ref()) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words = ranked.into_iter().take(max_vocab - RESERVED.len()).map(|(w, _)| w);
        let vocab: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(words).collect();
        Tokenizer::from_vocab(vocab)
    }

    /// Rebuilds a tokenizer from a stored vocabulary (reserved tokens first).
    pub fn from_vocab(vocab: Vec<String>) -> Result<Tokenizer, TokenizerError> {
        if vocab.len() <= RESERVED.len() || vocab[..RESERVED.len()] != RESERVED {
            return Err(TokenizerError::VocabTooSmall(vocab.len()));
        }
        let mut index = BTreeMap::new();
        for (i, w) in vocab.iter().enumerate() {
            if i >= RESERVED.len() && text::words(w) != [w.clone()] {
                return Err(TokenizerError::InvalidEntry(w.clone()));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(TokenizerError::InvalidEntry(w.clone()));
            }
        }
        Ok(Tokenizer { vocab, index })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.vocab.get(id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    /// Word tokens; out-of-vocabulary words map to UNK. Whitespace-delimited
    /// reserved markers (`<eos>` etc.) map back to their ids.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            if let Some(r) = RESERVED.iter().position(|m| *m == chunk) {
                out.push(r);
            } else {
                out.extend(text::words(chunk).iter().map(|w| self.id(w)));
            }
        }
        out
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(*id).unwrap_or(RESERVED[UNK]));
        }
        out
    }

    /// Completion text (no reserved tokens) with the terminating EOS.
    pub fn encode_completion(&self, text: &str) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self.encode(text).into_iter().filter(|&t| t >= RESERVED.len() || t == UNK).collect();
        ids.push(EOS);
        ids
    }

    /// Inverse of [`encode_completion`](Self::encode_completion): drops
    /// reserved tokens and stops at the first EOS.
    pub fn decode_completion(&self, ids: &[TokenId]) -> String {
        let words: Vec<TokenId> = ids
            .iter()
            .copied()
            .take_while(|&t| t != EOS)
            .filter(|&t| t >= RESERVED.len())
            .collect();
        self.decode(&words)
    }
}

impl TryFrom<Vec<String>> for Tokenizer {
    type Error = TokenizerError;

    fn try_from(vocab: Vec<String>) -> Result<Self, Self::Error> {
        Tokenizer::from_vocab(vocab)
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(t: Tokenizer) -> Self {
        t.vocab
    }
}
