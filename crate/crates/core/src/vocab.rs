//! Vocabulary table: token strings paired row-wise with word embeddings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;

/// Token strings aligned with the rows of a word-embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabTable {
    tokens: Vec<String>,
    embeddings: DenseMatrix,
    unit_normalized: bool,
}

impl VocabTable {
    /// Pairs tokens with embedding rows. Tokens must be unique, non-empty,
    /// and as numerous as the rows. Duplicate positions are reported 1-based
    /// (token files are one token per line).
    pub fn new(tokens: Vec<String>, embeddings: DenseMatrix) -> Result<Self> {
        if tokens.len() != embeddings.rows() {
            return Err(Error::CountMismatch {
                tokens: tokens.len(),
                rows: embeddings.rows(),
            });
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::EmptyToken { position: i + 1 });
            }
            if let Some(&first) = seen.get(t.as_str()) {
                return Err(Error::DuplicateToken {
                    token: t.clone(),
                    first: first + 1,
                    second: i + 1,
                });
            }
            seen.insert(t, i);
        }
        Ok(Self {
            tokens,
            embeddings,
            unit_normalized: false,
        })
    }

    /// Number of tokens (M).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Embedding dimension (d').
    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        self.embeddings.row(id)
    }

    pub fn embeddings(&self) -> &DenseMatrix {
        &self.embeddings
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    /// L2 norm of each embedding row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| math::norm(self.embedding(i)))
            .collect()
    }

    /// A copy with every row scaled to unit norm. Errors on a zero row.
    pub fn normalized(&self) -> Result<VocabTable> {
        let mut emb = self.embeddings.clone();
        for i in 0..emb.rows() {
            let n = math::norm(emb.row(i));
            if n == 0.0 {
                return Err(Error::ZeroNorm {
                    what: "vocab embedding row",
                });
            }
            for v in emb.row_mut(i) {
                *v /= n;
            }
        }
        Ok(VocabTable {
            tokens: self.tokens.clone(),
            embeddings: emb,
            unit_normalized: true,
        })
    }
}
