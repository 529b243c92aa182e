//! `projlens nms`: greedy non-maximum suppression over scored boxes, the
//! box-filtering step of annotation pipelines. Scores come with the input
//! (typically grounding confidences); the IoU threshold is a flag.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use projlens_core::mask_geom::{nms, BBoxScored};

use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;
use crate::report::write_json;

#[derive(Debug, Args)]
pub struct NmsArgs {
    /// Scored boxes: JSON array of {"bbox": [x1, y1, x2, y2], "score": s}
    #[arg(long)]
    pub boxes: PathBuf,
    /// Suppress a box iff its IoU with an already-kept box exceeds this
    #[arg(long, default_value_t = 0.5)]
    pub iou_thresh: f64,
    /// Report path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxJson {
    bbox: [f64; 4],
    score: f64,
}

#[derive(Debug, Serialize)]
struct NmsReport {
    kept: Vec<usize>,
    boxes: Vec<BoxJson>,
    manifest: RunManifest,
}

pub fn run(args: &NmsArgs) -> Result<()> {
    let bytes = fs::read(&args.boxes).map_err(io_err(&args.boxes))?;
    let parsed: Vec<BoxJson> = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: args.boxes.clone(),
        source,
    })?;
    for (i, b) in parsed.iter().enumerate() {
        if !b.score.is_finite() {
            return Err(CliError::BadInput {
                path: args.boxes.clone(),
                what: format!("box {i} has a non-finite score"),
            });
        }
    }
    let scored: Vec<BBoxScored> = parsed
        .iter()
        .map(|b| BBoxScored {
            bbox: b.bbox,
            score: b.score,
        })
        .collect();
    let kept = nms(&scored, args.iou_thresh);
    let kept_boxes = kept
        .iter()
        .map(|&i| BoxJson {
            bbox: parsed[i].bbox,
            score: parsed[i].score,
        })
        .collect();
    let report = NmsReport {
        kept,
        boxes: kept_boxes,
        manifest: RunManifest::new("nms")
            .flag("--iou-thresh", args.iou_thresh)
            .input(&args.boxes)?,
    };
    write_json(&report, &args.out)
}
