//! Serializable report bodies emitted by the CLI.

use serde::{Deserialize, Serialize};

use projlens_core::alignment::AlignmentReport;
use projlens_core::entropy::SpectrumReport;
use projlens_core::pursuit::TokenMapEntry;

use crate::manifest::RunManifest;

/// One embedding set's spectrum summary. Eigenvalues are optionally
/// truncated to the largest `top`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub entropy: f64,
    pub effective_rank: usize,
    pub n: usize,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
}

impl SpectrumJson {
    pub fn from_report(r: &SpectrumReport, top: usize) -> Self {
        let eigenvalues = if top == 0 {
            None
        } else {
            Some(r.eigenvalues.iter().take(top).copied().collect())
        };
        Self {
            entropy: r.entropy,
            effective_rank: r.effective_rank,
            n: r.n,
            d: r.d,
            eigenvalues,
        }
    }
}

/// Entropy in nats of one or two embedding sets, with the reduction when
/// both are present.
#[derive(Debug, Serialize, Deserialize)]
pub struct EntropyReportJson {
    pub units: &'static str,
    pub before: SpectrumJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<SpectrumJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectJson {
    pub tag: String,
    pub iou: f64,
    pub threshold_used: f64,
    pub threshold_nonpositive: bool,
    pub predicted_patches: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SkippedJson {
    pub tag: String,
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordAlignmentJson {
    pub image_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedJson>,
    /// Present when the whole record failed to evaluate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordAlignmentJson {
    pub fn from_report(image_id: &str, r: &AlignmentReport) -> Self {
        Self {
            image_id: image_id.to_string(),
            mean_iou: Some(r.mean_iou),
            mean_cosine: r.mean_cosine,
            objects: r
                .per_object
                .iter()
                .map(|o| ObjectJson {
                    tag: o.tag.clone(),
                    iou: o.iou,
                    threshold_used: o.threshold_used,
                    threshold_nonpositive: o.threshold_nonpositive,
                    predicted_patches: o.predicted_patches.clone(),
                    cosine: o.cosine,
                })
                .collect(),
            skipped: r
                .skipped
                .iter()
                .map(|s| SkippedJson {
                    tag: s.tag.clone(),
                    reason: s.reason.clone(),
                })
                .collect(),
            error: None,
        }
    }

    pub fn failed(image_id: &str, error: String) -> Self {
        Self {
            image_id: image_id.to_string(),
            mean_iou: None,
            mean_cosine: None,
            objects: Vec::new(),
            skipped: Vec::new(),
            error: Some(error),
        }
    }
}

/// Corpus-level alignment: unweighted mean over evaluated records of their
/// per-record means.
#[derive(Debug, Serialize, Deserialize)]
pub struct AlignReportJson {
    pub mean_iou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cosine: Option<f64>,
    pub evaluated_records: usize,
    pub failed_records: usize,
    pub records: Vec<RecordAlignmentJson>,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenMapStepJson {
    pub token_id: usize,
    pub token: String,
    pub alpha: f64,
    pub cosine: f64,
    pub recognized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenMapPatchJson {
    pub index: usize,
    pub steps: Vec<TokenMapStepJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenMapJson {
    pub k: usize,
    pub patches: Vec<TokenMapPatchJson>,
    pub manifest: RunManifest,
}

impl TokenMapJson {
    pub fn from_entries(k: usize, entries: &[TokenMapEntry], manifest: RunManifest) -> Self {
        Self {
            k,
            patches: entries
                .iter()
                .map(|e| TokenMapPatchJson {
                    index: e.patch,
                    steps: e
                        .steps
                        .iter()
                        .map(|s| TokenMapStepJson {
                            token_id: s.token_id,
                            token: s.token.clone(),
                            alpha: s.alpha,
                            cosine: s.cosine,
                            recognized: s.recognized,
                        })
                        .collect(),
                })
                .collect(),
            manifest,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PadStatsJson {
    pub records: usize,
    pub regions: usize,
    pub unique_tags: usize,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PadProblemJson {
    pub index: usize,
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PadValidateJson {
    pub records: usize,
    pub valid: usize,
    pub problems: Vec<PadProblemJson>,
    pub manifest: RunManifest,
}

/// Writes a report as pretty JSON with a trailing newline; overwrites.
pub fn write_json<T: Serialize>(value: &T, path: &std::path::Path) -> crate::error::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialization");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(crate::error::io_err(path))
}
