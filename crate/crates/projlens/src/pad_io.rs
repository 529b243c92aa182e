//! JSON (de)serialization of annotation records.
//!
//! A file is a JSON array of records:
//! `{"image_id", "size": [width, height], "caption", "labels": [{"tag",
//! "bbox": [x1, y1, x2, y2], "rle_mask"}]}`. `size` is width-first.
//! `rle_mask` may be omitted for box-only annotations. Unknown fields are
//! ignored. Parsing clamps bounding boxes into the image and validates
//! that every mask decodes to exactly the image's pixel count.

use std::fs;
use std::path::Path;

use projlens_core::pad::{MaskAnnotation, PadRecord};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RecordJson {
    image_id: String,
    /// [width, height]
    size: [u32; 2],
    caption: String,
    #[serde(default)]
    labels: Vec<LabelJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelJson {
    tag: String,
    bbox: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    rle_mask: Option<String>,
}

/// Parses a JSON array of records, clamping bboxes and validating masks.
pub fn parse_pad(bytes: &[u8], path: &Path) -> Result<Vec<PadRecord>> {
    let raw: Vec<RecordJson> = serde_json::from_slice(bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::with_capacity(raw.len());
    for (index, r) in raw.into_iter().enumerate() {
        records.push(convert_record(r, index, path)?);
    }
    Ok(records)
}

fn convert_record(r: RecordJson, index: usize, path: &Path) -> Result<PadRecord> {
    let width = r.size[0] as usize;
    let height = r.size[1] as usize;
    let bad = |message: String| CliError::BadRecord {
        path: path.to_path_buf(),
        index,
        image_id: r.image_id.clone(),
        message,
    };
    let mut labels = Vec::with_capacity(r.labels.len());
    for l in r.labels {
        labels.push(
            MaskAnnotation::new(l.tag, l.bbox, l.rle_mask, height, width)
                .map_err(|e| bad(e.to_string()))?,
        );
    }
    PadRecord::new(r.image_id.clone(), width, height, r.caption, labels)
        .map_err(|e| bad(e.to_string()))
}

/// Serializes records back to the on-disk JSON array (pretty-printed,
/// deterministic field order).
pub fn emit_pad(records: &[PadRecord]) -> Vec<u8> {
    let raw: Vec<RecordJson> = records
        .iter()
        .map(|r| RecordJson {
            image_id: r.image_id.clone(),
            size: [r.width as u32, r.height as u32],
            caption: r.caption.clone(),
            labels: r
                .labels
                .iter()
                .map(|l| LabelJson {
                    tag: l.tag.clone(),
                    bbox: l.bbox,
                    rle_mask: l.rle.clone(),
                })
                .collect(),
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&raw).expect("record serialization");
    out.push(b'\n');
    out
}

pub fn load_pad(path: &Path) -> Result<Vec<PadRecord>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_pad(&bytes, path)
}

pub fn save_pad(records: &[PadRecord], path: &Path) -> Result<()> {
    fs::write(path, emit_pad(records)).map_err(io_err(path))
}

/// One invalid record: its index, image id, and the failure message.
pub type RecordProblem = (usize, String, String);

/// Per-record problem list produced by validation; an empty list means the
/// file is clean.
pub fn validate_pad(bytes: &[u8], path: &Path) -> Result<(usize, Vec<RecordProblem>)> {
    let raw: Vec<RecordJson> = serde_json::from_slice(bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let total = raw.len();
    let mut problems = Vec::new();
    for (index, r) in raw.into_iter().enumerate() {
        let id = r.image_id.clone();
        if let Err(e) = convert_record(r, index, path) {
            let message = match e {
                CliError::BadRecord { message, .. } => message,
                other => other.to_string(),
            };
            problems.push((index, id, message));
        }
    }
    Ok((total, problems))
}
