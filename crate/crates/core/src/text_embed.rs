//! Label-to-embedding: tokenize an object label against the vocabulary and
//! average the word embeddings of its subtokens.
//!
//! The shipped tokenizer is a deterministic greedy longest-match over the
//! provided vocabulary: labels are whitespace-split first, then each word is
//! consumed left to right by the longest token that prefixes the remainder.
//! Callers holding exact LLM tokenizations bypass it via
//! [`TextEmbedding::from_token_ids`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vocab::VocabTable;

/// Tokenizer behavior flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerSpec {
    /// Match case-insensitively (labels and tokens are compared lowercased).
    pub lowercase: bool,
    pub mode: TokenizeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    GreedyLongestMatch,
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self {
            lowercase: true,
            mode: TokenizeMode::GreedyLongestMatch,
        }
    }
}

/// A label, its subtoken ids, and the mean of their embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub label: String,
    pub token_ids: Vec<usize>,
    pub vector: Vec<f64>,
}

impl TextEmbedding {
    /// Builds the embedding from pre-tokenized ids (the escape hatch for
    /// callers with exact LLM tokenizations).
    pub fn from_token_ids(label: &str, ids: &[usize], vocab: &VocabTable) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::UntokenizableSegment {
                label: label.to_string(),
                word: String::new(),
                offset: 0,
            });
        }
        for &id in ids {
            if id >= vocab.len() {
                return Err(Error::PatchIndexOutOfRange {
                    index: id,
                    patches: vocab.len(),
                });
            }
        }
        let vector = mean_rows(ids, vocab);
        Ok(Self {
            label: label.to_string(),
            token_ids: ids.to_vec(),
            vector,
        })
    }
}

/// Reusable greedy matcher over one vocabulary. Builds the match table once;
/// prefer this over the free functions when embedding many labels.
pub struct Tokenizer<'a> {
    vocab: &'a VocabTable,
    spec: TokenizerSpec,
    /// Match-form token -> lowest id carrying that form.
    table: BTreeMap<String, usize>,
    max_token_bytes: usize,
}

impl<'a> Tokenizer<'a> {
    pub fn new(vocab: &'a VocabTable, spec: TokenizerSpec) -> Self {
        let mut table = BTreeMap::new();
        let mut max_token_bytes = 0;
        for (id, token) in vocab.tokens().iter().enumerate() {
            let key = if spec.lowercase {
                token.to_lowercase()
            } else {
                token.clone()
            };
            max_token_bytes = max_token_bytes.max(key.len());
            // First insertion wins so colliding case variants map to the lowest id.
            table.entry(key).or_insert(id);
        }
        Self {
            vocab,
            spec,
            table,
            max_token_bytes,
        }
    }

    /// Splits the label on whitespace, then greedily consumes each word by
    /// the longest matching vocabulary token.
    pub fn tokenize(&self, label: &str) -> Result<Vec<usize>> {
        let prepared = if self.spec.lowercase {
            label.to_lowercase()
        } else {
            label.to_string()
        };
        let mut ids = Vec::new();
        for word in prepared.split_whitespace() {
            let mut pos = 0;
            while pos < word.len() {
                let rest = &word[pos..];
                let mut matched = None;
                let cap = self.max_token_bytes.min(rest.len());
                for len in (1..=cap).rev() {
                    if !rest.is_char_boundary(len) {
                        continue;
                    }
                    if let Some(&id) = self.table.get(&rest[..len]) {
                        matched = Some((id, len));
                        break;
                    }
                }
                match matched {
                    Some((id, len)) => {
                        ids.push(id);
                        pos += len;
                    }
                    None => {
                        return Err(Error::UntokenizableSegment {
                            label: label.to_string(),
                            word: word.to_string(),
                            offset: pos,
                        });
                    }
                }
            }
        }
        if ids.is_empty() {
            return Err(Error::UntokenizableSegment {
                label: label.to_string(),
                word: String::new(),
                offset: 0,
            });
        }
        Ok(ids)
    }

    pub fn label_embedding(&self, label: &str) -> Result<TextEmbedding> {
        let ids = self.tokenize(label)?;
        let vector = mean_rows(&ids, self.vocab);
        Ok(TextEmbedding {
            label: label.to_string(),
            token_ids: ids,
            vector,
        })
    }
}

/// One-shot tokenization. See [`Tokenizer`] for the reusable form.
pub fn tokenize(label: &str, vocab: &VocabTable, spec: TokenizerSpec) -> Result<Vec<usize>> {
    Tokenizer::new(vocab, spec).tokenize(label)
}

/// One-shot label embedding: the arithmetic mean of the subtoken rows.
pub fn label_embedding(
    label: &str,
    vocab: &VocabTable,
    spec: TokenizerSpec,
) -> Result<TextEmbedding> {
    Tokenizer::new(vocab, spec).label_embedding(label)
}

fn mean_rows(ids: &[usize], vocab: &VocabTable) -> Vec<f64> {
    let d = vocab.dim();
    let mut acc = alloc::vec![0.0; d];
    for &id in ids {
        for (a, &w) in acc.iter_mut().zip(vocab.embedding(id)) {
            *a += w;
        }
    }
    let k = ids.len() as f64;
    for a in acc.iter_mut() {
        *a /= k;
    }
    acc
}
