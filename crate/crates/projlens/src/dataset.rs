//! On-disk layouts for training data, checkpoints, history, and per-image
//! embedding directories.
//!
//! A dataset directory holds one NPY per image plus `manifest.json`:
//! `{"images": {"<file>.npy": [{"patch_indices": [...], "token_ids":
//! [...]}, ...], ...}}` (sorted by file name). A checkpoint directory holds
//! one NPY per parameter tensor plus `metadata.json` with `{kind, d, h,
//! d_prime, step, seed}`. History is CSV with columns
//! `step,loss,l_patch,l_caption,beta,lr,mean_cosine`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use projlens_core::trainer::{
    HistoryRow, ProjectorKind, ProjectorParams, TrainObject, TrainSample,
};
use projlens_core::DenseMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::npy::{load_matrix, save_matrix};

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    images: BTreeMap<String, Vec<ObjectJson>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectJson {
    patch_indices: Vec<usize>,
    token_ids: Vec<usize>,
}

/// File name an image id maps to inside dataset/embedding directories.
pub fn image_file_name(image_id: &str) -> String {
    let sanitized: String = image_id
        .chars()
        .map(|c| {
            if matches!(c, '/' | '\\' | ':') {
                '_'
            } else {
                c
            }
        })
        .collect();
    format!("{sanitized}.npy")
}

/// Writes samples as a dataset directory keyed by the given image ids.
pub fn save_dataset(dir: &Path, ids: &[String], samples: &[TrainSample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut images = BTreeMap::new();
    for (id, sample) in ids.iter().zip(samples) {
        let file = image_file_name(id);
        save_matrix(&sample.patches, &dir.join(&file))?;
        let objects = sample
            .objects
            .iter()
            .map(|o| ObjectJson {
                patch_indices: o.patch_indices.clone(),
                token_ids: o.token_ids.clone(),
            })
            .collect();
        images.insert(file, objects);
    }
    let manifest = DatasetManifest { images };
    crate::report::write_json(&manifest, &dir.join("manifest.json"))
}

/// Loads a dataset directory; returns (file names, samples) in manifest
/// (sorted) order.
pub fn load_dataset(dir: &Path) -> Result<(Vec<String>, Vec<TrainSample>)> {
    let manifest_path = dir.join("manifest.json");
    let bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
            path: manifest_path,
            source,
        })?;
    let mut names = Vec::with_capacity(manifest.images.len());
    let mut samples = Vec::with_capacity(manifest.images.len());
    for (file, objects) in manifest.images {
        let patches = load_matrix(&dir.join(&file))?;
        let objects = objects
            .into_iter()
            .map(|o| TrainObject {
                patch_indices: o.patch_indices,
                token_ids: o.token_ids,
            })
            .collect();
        names.push(file);
        samples.push(TrainSample { patches, objects });
    }
    Ok((names, samples))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    pub d_prime: usize,
    pub step: usize,
    pub seed: u64,
}

/// Writes parameters as one NPY per tensor plus metadata. Bias vectors are
/// stored as 1 x n matrices.
pub fn save_checkpoint(dir: &Path, params: &ProjectorParams, step: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (d, h, d_prime) = params.dims();
    let meta = CheckpointMeta {
        kind: params.kind().name().to_string(),
        d,
        h,
        d_prime,
        step,
        seed,
    };
    crate::report::write_json(&meta, &dir.join("metadata.json"))?;
    let as_row = |v: &[f64]| DenseMatrix::new(1, v.len(), v.to_vec()).expect("bias row");
    match params {
        ProjectorParams::Linear { weight, bias } => {
            save_matrix(weight, &dir.join("weight.npy"))?;
            save_matrix(&as_row(bias), &dir.join("bias.npy"))?;
        }
        ProjectorParams::Mlp2 {
            weight1,
            bias1,
            weight2,
            bias2,
        } => {
            save_matrix(weight1, &dir.join("weight1.npy"))?;
            save_matrix(&as_row(bias1), &dir.join("bias1.npy"))?;
            save_matrix(weight2, &dir.join("weight2.npy"))?;
            save_matrix(&as_row(bias2), &dir.join("bias2.npy"))?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ProjectorParams, CheckpointMeta)> {
    let meta_path = dir.join("metadata.json");
    let bytes = fs::read(&meta_path).map_err(io_err(&meta_path))?;
    let meta: CheckpointMeta = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: meta_path.clone(),
        source,
    })?;
    let row = |m: DenseMatrix| m.data().to_vec();
    let params = match ProjectorKind::parse(&meta.kind)? {
        ProjectorKind::Linear => ProjectorParams::Linear {
            weight: load_matrix(&dir.join("weight.npy"))?,
            bias: row(load_matrix(&dir.join("bias.npy"))?),
        },
        ProjectorKind::Mlp2 => ProjectorParams::Mlp2 {
            weight1: load_matrix(&dir.join("weight1.npy"))?,
            bias1: row(load_matrix(&dir.join("bias1.npy"))?),
            weight2: load_matrix(&dir.join("weight2.npy"))?,
            bias2: row(load_matrix(&dir.join("bias2.npy"))?),
        },
    };
    Ok((params, meta))
}

/// History CSV: header plus one row per step, floats in shortest
/// round-trip form (deterministic bytes for identical runs).
pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("step,loss,l_patch,l_caption,beta,lr,mean_cosine\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.loss, r.l_patch, r.l_caption, r.beta, r.lr, r.mean_cosine
        ));
    }
    out
}

pub fn save_history(history: &[HistoryRow], path: &Path) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(io_err(path))
}

/// NPY files directly inside a directory, sorted by name.
pub fn npy_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "npy") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
