//! `projlens align`: patch-level localization of every record's objects and
//! the corpus alignment score.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use projlens_core::alignment::{align_score, similarity_map, TokenOverrides};
use projlens_core::pad::PadRecord;
use projlens_core::text_embed::{TextEmbedding, Tokenizer, TokenizerSpec};
use projlens_core::DenseMatrix;
use projlens_core::VocabTable;

use crate::commands::{parse_grid, parse_threshold, threshold_to_string, with_worker_pool};
use crate::dataset::image_file_name;
use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;
use crate::npy::load_matrix;
use crate::pad_io::load_pad;
use crate::report::{write_json, AlignReportJson, RecordAlignmentJson};
use crate::vocab_io::{load_token_overrides, load_vocab};

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Projected embeddings: one NPY (single-record files) or a directory
    /// with one NPY per record named after its image_id
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Annotation records (JSON array)
    #[arg(long)]
    pub pad: PathBuf,
    /// Word-embedding matrix (NPY)
    #[arg(long)]
    pub vocab_emb: PathBuf,
    /// Token strings, one per line
    #[arg(long)]
    pub vocab_tok: PathBuf,
    /// Patch grid HxWxP
    #[arg(long, default_value = "24x24x14")]
    pub grid: String,
    /// Threshold strategy: mean_std:A | quantile:Q | fixed:C
    #[arg(long, default_value = "mean_std:1.0")]
    pub threshold: String,
    /// Sidecar JSON mapping label -> [token_id, ...], overriding the tokenizer
    #[arg(long)]
    pub token_ids: Option<PathBuf>,
    /// How annotation-resolution masks map onto the square grid input:
    /// "squash" (direct, aspect-distorting) or "pad" (aspect-preserving,
    /// centered on a square canvas first) — match the encoder's image
    /// preprocessing
    #[arg(long, default_value = "squash")]
    pub mask_resize: String,
    /// Match labels case-sensitively
    #[arg(long)]
    pub keep_case: bool,
    /// Optional CSV of per-label patch similarities (image_id,tag,patch,cosine)
    #[arg(long)]
    pub heat_csv: Option<PathBuf>,
    /// Report path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &AlignArgs) -> Result<()> {
    let grid = parse_grid(&args.grid)?;
    let strategy = parse_threshold(&args.threshold)?;
    let vocab = load_vocab(&args.vocab_emb, &args.vocab_tok)?;
    let mut records = load_pad(&args.pad)?;
    match args.mask_resize.as_str() {
        "squash" => {}
        "pad" => {
            records = records
                .iter()
                .map(letterbox_record)
                .collect::<Result<_>>()?;
        }
        other => {
            return Err(CliError::InvalidFlag(format!(
                "--mask-resize takes squash or pad, got {other:?}"
            )))
        }
    }
    let overrides: Option<TokenOverrides> = args
        .token_ids
        .as_deref()
        .map(load_token_overrides)
        .transpose()?;
    let spec = TokenizerSpec {
        lowercase: !args.keep_case,
        ..TokenizerSpec::default()
    };

    let embedding_paths = resolve_embedding_paths(&args.embeddings, &records)?;

    let results: Vec<(RecordAlignmentJson, Vec<HeatRow>)> = with_worker_pool(|| {
        records
            .par_iter()
            .zip(&embedding_paths)
            .map(|(record, path)| {
                evaluate_record(
                    record,
                    path,
                    &vocab,
                    spec,
                    &overrides,
                    grid,
                    strategy,
                    args.heat_csv.is_some(),
                )
            })
            .collect()
    });

    let mut record_reports = Vec::with_capacity(results.len());
    let mut heat_rows = Vec::new();
    let mut iou_sum = 0.0;
    let mut cos_sum = 0.0;
    let mut cos_count = 0usize;
    let mut evaluated = 0usize;
    for (report, heat) in results {
        if let Some(iou) = report.mean_iou {
            evaluated += 1;
            iou_sum += iou;
            if let Some(c) = report.mean_cosine {
                cos_sum += c;
                cos_count += 1;
            }
        }
        heat_rows.extend(heat);
        record_reports.push(report);
    }
    if evaluated == 0 {
        return Err(CliError::NoEvaluableRecords);
    }

    if let Some(path) = &args.heat_csv {
        let mut csv = String::from("image_id,tag,patch,cosine\n");
        for row in &heat_rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.image_id, row.tag, row.patch, row.value
            ));
        }
        fs::write(path, csv).map_err(io_err(path))?;
    }

    let manifest = RunManifest::new("align")
        .flag("--grid", &args.grid)
        .flag("--threshold", threshold_to_string(strategy))
        .flag("--mask-resize", &args.mask_resize)
        .flag("--keep-case", args.keep_case)
        .input(&args.embeddings)?
        .input(&args.pad)?
        .input(&args.vocab_emb)?
        .input(&args.vocab_tok)?;
    let manifest = match &args.token_ids {
        Some(p) => manifest.input(p)?,
        None => manifest,
    };

    let report = AlignReportJson {
        mean_iou: iou_sum / evaluated as f64,
        mean_cosine: if cos_count > 0 {
            Some(cos_sum / cos_count as f64)
        } else {
            None
        },
        evaluated_records: evaluated,
        failed_records: record_reports.len() - evaluated,
        records: record_reports,
        manifest,
    };
    write_json(&report, &args.out)
}

struct HeatRow {
    image_id: String,
    tag: String,
    patch: usize,
    value: f64,
}

/// Re-expresses a record on a centered square canvas of side max(w, h):
/// masks are pasted with their aspect intact and bboxes shifted, matching
/// encoders that letterbox rather than squash their input.
fn letterbox_record(record: &PadRecord) -> Result<PadRecord> {
    use projlens_core::mask_geom::{rle_encode, BinaryMask};
    let side = record.width.max(record.height);
    let dx = (side - record.width) / 2;
    let dy = (side - record.height) / 2;
    let mut labels = Vec::with_capacity(record.labels.len());
    for ann in &record.labels {
        let src = ann.decode_mask()?;
        let mut dst = BinaryMask::zeros(side, side);
        for y in 0..src.height() {
            for x in 0..src.width() {
                if src.get(y, x) != 0 {
                    dst.set(y + dy, x + dx, 1);
                }
            }
        }
        let bbox = [
            ann.bbox[0] + dx as f64,
            ann.bbox[1] + dy as f64,
            ann.bbox[2] + dx as f64,
            ann.bbox[3] + dy as f64,
        ];
        labels.push(projlens_core::pad::MaskAnnotation::new(
            ann.tag.clone(),
            bbox,
            Some(rle_encode(&dst)),
            side,
            side,
        )?);
    }
    Ok(PadRecord::new(
        record.image_id.clone(),
        side,
        side,
        record.caption.clone(),
        labels,
    )?)
}

/// Maps each record to its embedding NPY. A single file is allowed only
/// when the annotation file holds exactly one record; a directory is keyed
/// by sanitized image_id.
fn resolve_embedding_paths(embeddings: &Path, records: &[PadRecord]) -> Result<Vec<PathBuf>> {
    if embeddings.is_dir() {
        Ok(records
            .iter()
            .map(|r| embeddings.join(image_file_name(&r.image_id)))
            .collect())
    } else if records.len() == 1 {
        Ok(vec![embeddings.to_path_buf()])
    } else {
        Err(CliError::BadInput {
            path: embeddings.to_path_buf(),
            what: format!(
                "single embedding file given for {} records; pass a directory",
                records.len()
            ),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_record(
    record: &PadRecord,
    embedding_path: &Path,
    vocab: &VocabTable,
    spec: TokenizerSpec,
    overrides: &Option<TokenOverrides>,
    grid: projlens_core::mask_geom::PatchGrid,
    strategy: projlens_core::alignment::ThresholdStrategy,
    want_heat: bool,
) -> (RecordAlignmentJson, Vec<HeatRow>) {
    let outcome = load_matrix(embedding_path)
        .map_err(|e| e.to_string())
        .and_then(|v| {
            align_score(&v, record, vocab, spec, overrides.as_ref(), &grid, strategy)
                .map(|r| (v, r))
                .map_err(|e| e.to_string())
        });
    match outcome {
        Ok((v, r)) => {
            let heat = if want_heat {
                heat_for_record(record, &v, vocab, spec, overrides, grid)
            } else {
                Vec::new()
            };
            (RecordAlignmentJson::from_report(&record.image_id, &r), heat)
        }
        Err(e) => (RecordAlignmentJson::failed(&record.image_id, e), Vec::new()),
    }
}

fn heat_for_record(
    record: &PadRecord,
    v: &DenseMatrix,
    vocab: &VocabTable,
    spec: TokenizerSpec,
    overrides: &Option<TokenOverrides>,
    grid: projlens_core::mask_geom::PatchGrid,
) -> Vec<HeatRow> {
    let tokenizer = Tokenizer::new(vocab, spec);
    let mut rows = Vec::new();
    for ann in &record.labels {
        let text = match overrides.as_ref().and_then(|o| o.get(&ann.tag)) {
            Some(ids) => TextEmbedding::from_token_ids(&ann.tag, ids, vocab),
            None => tokenizer.label_embedding(&ann.tag),
        };
        let Ok(text) = text else { continue };
        let Ok(map) = similarity_map(v, &text, &grid) else {
            continue;
        };
        for (patch, &value) in map.values.iter().enumerate() {
            rows.push(HeatRow {
                image_id: record.image_id.clone(),
                tag: ann.tag.clone(),
                patch,
                value,
            });
        }
    }
    rows
}
