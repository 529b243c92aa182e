//! Run manifests: every report embeds the command, its resolved flags, and
//! content digests of its inputs, so comparisons across projector variants
//! are auditable. No timestamps — reruns on identical inputs must produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Resolved flag values, flag name -> rendered value.
    pub flags: BTreeMap<String, String>,
    /// Input path -> sha256 content digest.
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            flags: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn flag(mut self, name: &str, value: impl ToString) -> Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn flag_opt(self, name: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.flag(name, v),
            None => self,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Digests a file or directory input.
    pub fn input(mut self, path: &Path) -> Result<Self> {
        let digest = digest_path(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }
}

/// sha256 of a file's bytes, or for a directory the sha256 of the sorted
/// `name:digest` lines of its files (one level, recursive).
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut entries: Vec<(String, String)> = Vec::new();
        collect_digests(path, path, &mut entries)?;
        entries.sort();
        let mut hasher = Sha256::new();
        for (name, digest) in entries {
            hasher.update(name.as_bytes());
            hasher.update(b":");
            hasher.update(digest.as_bytes());
            hasher.update(b"\n");
        }
        Ok(hex(&hasher.finalize()))
    } else {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

fn collect_digests(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            collect_digests(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .display()
                .to_string();
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            out.push((rel, hex(&Sha256::digest(&bytes))));
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
