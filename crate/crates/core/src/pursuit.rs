//! Greedy matching pursuit of a vision embedding over the word-embedding
//! dictionary.
//!
//! Each iteration selects the atom with the largest signed inner product
//! against the current residual, records its coefficient, and subtracts the
//! projection. Dictionary rows are L2-normalized internally: the inner-
//! product argmax and the projection-removal step are only mutually
//! consistent for unit atoms, and word-embedding rows are generally not
//! unit norm. With unit atoms every step satisfies the energy identity
//! ||r'||^2 = ||r||^2 - alpha^2, so the residual norm never increases.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::vocab::VocabTable;

/// One pursuit iteration: the chosen atom, its coefficient against the
/// residual, and the residual norm after removal.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitStep {
    pub token_id: usize,
    pub coefficient: f64,
    pub residual_norm: f64,
}

/// A full decomposition; `steps.len()` is the iteration count K.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PursuitResult {
    pub steps: Vec<PursuitStep>,
}

impl PursuitResult {
    pub fn k(&self) -> usize {
        self.steps.len()
    }
}

/// Pursuit variants. The default is the plain signed-argmax rule with atom
/// re-selection allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PursuitOptions {
    pub k: usize,
    /// Select by |<w, r>| instead of the signed inner product.
    pub absolute: bool,
    /// Forbid selecting the same atom twice.
    pub distinct: bool,
}

impl Default for PursuitOptions {
    fn default() -> Self {
        Self {
            k: 5,
            absolute: false,
            distinct: false,
        }
    }
}

/// Decomposes `v` into `k` greedy steps over the vocabulary dictionary.
/// Ties in the argmax break toward the lowest token id.
pub fn matching_pursuit(v: &[f64], vocab: &VocabTable, k: usize) -> Result<PursuitResult> {
    matching_pursuit_with(
        v,
        vocab,
        PursuitOptions {
            k,
            ..PursuitOptions::default()
        },
    )
}

/// [`matching_pursuit`] with explicit options.
pub fn matching_pursuit_with(
    v: &[f64],
    vocab: &VocabTable,
    opts: PursuitOptions,
) -> Result<PursuitResult> {
    let norms = vocab.row_norms();
    pursuit_inner(v, vocab, &norms, opts)
}

fn pursuit_inner(
    v: &[f64],
    vocab: &VocabTable,
    norms: &[f64],
    opts: PursuitOptions,
) -> Result<PursuitResult> {
    if v.len() != vocab.dim() {
        return Err(Error::DimensionMismatch {
            expected: vocab.dim(),
            got: v.len(),
            what: "pursuit input vs vocab",
        });
    }
    let usable = norms.iter().filter(|&&n| n > 0.0).count();
    if opts.distinct && opts.k > usable {
        return Err(Error::KExceedsVocab {
            k: opts.k,
            vocab: usable,
        });
    }
    if usable == 0 && opts.k > 0 {
        return Err(Error::ZeroNorm {
            what: "every vocab embedding row",
        });
    }

    let mut residual = v.to_vec();
    let mut taken: BTreeSet<usize> = BTreeSet::new();
    let mut steps = Vec::with_capacity(opts.k);

    for _ in 0..opts.k {
        let mut best: Option<(usize, f64)> = None;
        for (id, &atom_norm) in norms.iter().enumerate() {
            if atom_norm == 0.0 || (opts.distinct && taken.contains(&id)) {
                continue;
            }
            // Inner product against the unit-normalized atom.
            let score = math::dot(vocab.embedding(id), &residual) / atom_norm;
            let key = if opts.absolute {
                math::abs(score)
            } else {
                score
            };
            match best {
                Some((_, best_key)) if key <= best_key => {}
                _ => best = Some((id, key)),
            }
        }
        let (id, _) = best.expect("at least one usable atom");
        let alpha = math::dot(vocab.embedding(id), &residual) / norms[id];
        let inv_norm = 1.0 / norms[id];
        for (r, &w) in residual.iter_mut().zip(vocab.embedding(id)) {
            *r -= alpha * w * inv_norm;
        }
        taken.insert(id);
        steps.push(PursuitStep {
            token_id: id,
            coefficient: alpha,
            residual_norm: math::norm(&residual),
        });
    }
    Ok(PursuitResult { steps })
}

/// One tokenmap annotation: the selected token with its coefficient, its
/// cosine against the original (pre-pursuit) embedding for font-size
/// rendering, and whether the stripped token string appears in the word
/// list for coloring.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMapStep {
    pub token_id: usize,
    pub token: String,
    pub alpha: f64,
    pub cosine: f64,
    pub recognized: bool,
}

/// Pursuit decomposition of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMapEntry {
    pub patch: usize,
    pub steps: Vec<TokenMapStep>,
}

/// Runs matching pursuit on every patch row of `v` and annotates each step
/// for rendering. `wordlist` entries are compared lowercased against token
/// strings stripped of subword markers; with no word list every
/// `recognized` flag is false.
pub fn tokenmap(
    v: &DenseMatrix,
    vocab: &VocabTable,
    opts: PursuitOptions,
    wordlist: Option<&BTreeSet<String>>,
) -> Result<Vec<TokenMapEntry>> {
    let norms = vocab.row_norms();
    let mut out = Vec::with_capacity(v.rows());
    for patch in 0..v.rows() {
        let row = v.row(patch);
        let result = pursuit_inner(row, vocab, &norms, opts)?;
        let steps = result
            .steps
            .into_iter()
            .map(|s| {
                let token = vocab.token(s.token_id);
                let recognized = wordlist
                    .map(|wl| wl.contains(&strip_markers(token)))
                    .unwrap_or(false);
                TokenMapStep {
                    token_id: s.token_id,
                    token: String::from(token),
                    alpha: s.coefficient,
                    cosine: math::cosine(row, vocab.embedding(s.token_id)),
                    recognized,
                }
            })
            .collect();
        out.push(TokenMapEntry { patch, steps });
    }
    Ok(out)
}

/// Strips common subword markers and lowercases, so tokenizer-internal
/// forms compare against plain word lists.
pub fn strip_markers(token: &str) -> String {
    let stripped = token
        .trim_start_matches(['\u{2581}', '\u{0120}']) // sentencepiece / byte-BPE space marks
        .trim();
    let stripped = stripped.strip_prefix("##").unwrap_or(stripped);
    stripped.to_lowercase()
}
