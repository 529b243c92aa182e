//! Vocabulary loading: an NPY embedding matrix paired with a plain-text
//! token file (UTF-8, one token per line, LF-separated).

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use projlens_core::VocabTable;

use crate::error::{io_err, CliError, Result};
use crate::npy::load_matrix;

/// Loads tokens + embeddings into an aligned table (not unit-normalized).
pub fn load_vocab(embeddings_path: &Path, tokens_path: &Path) -> Result<VocabTable> {
    let text = fs::read_to_string(tokens_path).map_err(io_err(tokens_path))?;
    let tokens = split_token_lines(&text);
    let embeddings = load_matrix(embeddings_path)?;
    Ok(VocabTable::new(tokens, embeddings)?)
}

/// Writes the table back out as the same two files.
pub fn save_vocab(vocab: &VocabTable, embeddings_path: &Path, tokens_path: &Path) -> Result<()> {
    crate::npy::save_matrix(vocab.embeddings(), embeddings_path)?;
    let mut text = vocab.tokens().join("\n");
    text.push('\n');
    fs::write(tokens_path, text).map_err(io_err(tokens_path))
}

/// One word per line, lowercased, deduplicated; used for tokenmap coloring.
pub fn load_wordlist(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(split_token_lines(&text)
        .into_iter()
        .map(|w| w.to_lowercase())
        .collect())
}

/// Sidecar tokenizations: a JSON object mapping label -> [token_id, ...].
pub fn load_token_overrides(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn split_token_lines(text: &str) -> Vec<String> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines.into_iter().map(str::to_string).collect()
}
