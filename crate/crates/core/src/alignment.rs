//! Patch-level localization and the alignment score.
//!
//! For each labeled object, the label's text embedding is compared against
//! every patch embedding by cosine similarity; patches above an adaptive
//! threshold form the predicted region, which is rasterized and scored by
//! IoU against the ground-truth mask in pixel space. The per-record score is
//! the mean IoU over its objects. A companion statistic is the mean cosine
//! between each object's mask-selected mean embedding and its text
//! embedding.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask_geom::{
    mask_iou, patch_set_to_mask, patches_covered, resample_mask, BinaryMask, PatchGrid,
};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::pad::PadRecord;
use crate::text_embed::{TextEmbedding, Tokenizer, TokenizerSpec};
use crate::vocab::VocabTable;

/// Per-patch cosine similarity against one label embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub label: String,
    /// One cosine per patch, in patch order; zero-norm patches get 0.
    pub values: Vec<f64>,
    pub grid: PatchGrid,
}

/// How the localization threshold is chosen from a similarity map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdStrategy {
    /// c = mean + alpha * population std of the map values.
    MeanPlusStd(f64),
    /// c = the q-th quantile of the map values (nearest-rank).
    Quantile(f64),
    /// c as given.
    Fixed(f64),
}

impl Default for ThresholdStrategy {
    fn default() -> Self {
        ThresholdStrategy::MeanPlusStd(1.0)
    }
}

/// A localized object: the selected patch set and its rasterized mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub idx: Vec<usize>,
    pub threshold: f64,
    pub mask: BinaryMask,
}

/// Per-object alignment outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAlignment {
    pub tag: String,
    pub iou: f64,
    pub threshold_used: f64,
    /// Set when the chosen threshold was not strictly positive, which the
    /// localization rule does not anticipate on well-aligned maps.
    pub threshold_nonpositive: bool,
    pub predicted_patches: Vec<usize>,
    /// Cosine between the ground-truth-selected mean embedding and the text
    /// embedding; absent when the ground truth selects no patch.
    pub cosine: Option<f64>,
}

/// An object that could not be evaluated, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedObject {
    pub tag: String,
    pub reason: String,
}

/// Alignment of one record: per-object IoUs, their mean, and the mean
/// object cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub per_object: Vec<ObjectAlignment>,
    pub skipped: Vec<SkippedObject>,
    /// Mean of the per-object IoUs.
    pub mean_iou: f64,
    /// Mean of the defined per-object cosines; absent if none were defined.
    pub mean_cosine: Option<f64>,
}

/// Sidecar tokenizations: label string -> exact token ids, overriding the
/// internal tokenizer.
pub type TokenOverrides = BTreeMap<String, Vec<usize>>;

/// Cosine similarity of each patch row of `v` against `t`. Patch rows with
/// zero norm get similarity 0.
pub fn similarity_map(
    v: &DenseMatrix,
    t: &TextEmbedding,
    grid: &PatchGrid,
) -> Result<SimilarityMap> {
    if v.rows() != grid.patches() {
        return Err(Error::DimensionMismatch {
            expected: grid.patches(),
            got: v.rows(),
            what: "patch count vs grid",
        });
    }
    if v.cols() != t.vector.len() {
        return Err(Error::DimensionMismatch {
            expected: t.vector.len(),
            got: v.cols(),
            what: "embedding dimension",
        });
    }
    let tn = math::norm(&t.vector);
    if tn == 0.0 {
        return Err(Error::ZeroNorm {
            what: "text embedding",
        });
    }
    let values = (0..v.rows())
        .map(|i| {
            let row = v.row(i);
            let rn = math::norm(row);
            if rn == 0.0 {
                0.0
            } else {
                math::dot(row, &t.vector) / (rn * tn)
            }
        })
        .collect();
    Ok(SimilarityMap {
        label: t.label.clone(),
        values,
        grid: *grid,
    })
}

/// Resolves a threshold from the map per the strategy.
pub fn adaptive_threshold(map: &SimilarityMap, strategy: ThresholdStrategy) -> Result<f64> {
    if map.values.is_empty() {
        return Err(Error::NoEvaluableObjects);
    }
    match strategy {
        ThresholdStrategy::MeanPlusStd(alpha) => {
            if !alpha.is_finite() {
                return Err(Error::InvalidThreshold {
                    what: "alpha must be finite",
                });
            }
            let n = map.values.len() as f64;
            let mean: f64 = map.values.iter().sum::<f64>() / n;
            let var: f64 = map
                .values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
            Ok(mean + alpha * math::sqrt(var))
        }
        ThresholdStrategy::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidThreshold {
                    what: "quantile must be in [0, 1]",
                });
            }
            let mut sorted = map.values.clone();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite similarities"));
            // Nearest-rank: the ceil(q * n)-th smallest, 1-based.
            let n = sorted.len();
            let rank = math::ceil(q * n as f64) as usize;
            Ok(sorted[rank.clamp(1, n) - 1])
        }
        ThresholdStrategy::Fixed(c) => {
            if !c.is_finite() {
                return Err(Error::InvalidThreshold {
                    what: "fixed threshold must be finite",
                });
            }
            Ok(c)
        }
    }
}

/// Selects the patches whose similarity strictly exceeds the threshold and
/// rasterizes them. Zero-norm patches are never selected (they have no
/// direction to compare).
pub fn localize(
    v: &DenseMatrix,
    t: &TextEmbedding,
    grid: &PatchGrid,
    strategy: ThresholdStrategy,
) -> Result<Localization> {
    let map = similarity_map(v, t, grid)?;
    let threshold = adaptive_threshold(&map, strategy)?;
    let idx: Vec<usize> = map
        .values
        .iter()
        .enumerate()
        .filter(|(i, &s)| s > threshold && math::norm(v.row(*i)) > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mask = patch_set_to_mask(&idx, grid)?;
    Ok(Localization {
        idx,
        threshold,
        mask,
    })
}

/// Scores one record: localizes every object whose label embeds, rasterizes
/// the predictions, and compares against the ground-truth masks (resampled
/// to the grid's input resolution) by IoU. Objects whose labels fail to
/// tokenize are skipped and reported. Errors if no object is evaluable.
pub fn align_score(
    v: &DenseMatrix,
    record: &PadRecord,
    vocab: &VocabTable,
    spec: TokenizerSpec,
    overrides: Option<&TokenOverrides>,
    grid: &PatchGrid,
    strategy: ThresholdStrategy,
) -> Result<AlignmentReport> {
    let tokenizer = Tokenizer::new(vocab, spec);
    let mut per_object = Vec::new();
    let mut skipped = Vec::new();

    for ann in &record.labels {
        let embedded = match overrides.and_then(|o| o.get(&ann.tag)) {
            Some(ids) => TextEmbedding::from_token_ids(&ann.tag, ids, vocab),
            None => tokenizer.label_embedding(&ann.tag),
        };
        let text = match embedded {
            Ok(t) => t,
            Err(e) => {
                skipped.push(SkippedObject {
                    tag: ann.tag.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if math::norm(&text.vector) == 0.0 {
            skipped.push(SkippedObject {
                tag: ann.tag.clone(),
                reason: Error::ZeroNorm {
                    what: "text embedding",
                }
                .to_string(),
            });
            continue;
        }

        let loc = localize(v, &text, grid, strategy)?;
        let gt = resample_mask(&ann.decode_mask()?, grid.input_h(), grid.input_w())?;
        let iou = mask_iou(&loc.mask, &gt)?;

        let gt_patches = patches_covered(&gt, grid, 0.5)?;
        let cosine = if gt_patches.is_empty() {
            None
        } else {
            let vbar = mean_patch_rows(v, &gt_patches);
            let c = math::cosine(&vbar, &text.vector);
            if math::norm(&vbar) == 0.0 {
                None
            } else {
                Some(c)
            }
        };

        per_object.push(ObjectAlignment {
            tag: ann.tag.clone(),
            iou,
            threshold_used: loc.threshold,
            threshold_nonpositive: loc.threshold <= 0.0,
            predicted_patches: loc.idx,
            cosine,
        });
    }

    if per_object.is_empty() {
        return Err(Error::NoEvaluableObjects);
    }
    let mean_iou = per_object.iter().map(|o| o.iou).sum::<f64>() / per_object.len() as f64;
    let cosines: Vec<f64> = per_object.iter().filter_map(|o| o.cosine).collect();
    let mean_cosine = if cosines.is_empty() {
        None
    } else {
        Some(cosines.iter().sum::<f64>() / cosines.len() as f64)
    };
    Ok(AlignmentReport {
        per_object,
        skipped,
        mean_iou,
        mean_cosine,
    })
}

/// Mean of the selected patch rows.
pub fn mean_patch_rows(v: &DenseMatrix, idx: &[usize]) -> Vec<f64> {
    let mut acc = alloc::vec![0.0; v.cols()];
    for &i in idx {
        for (a, &x) in acc.iter_mut().zip(v.row(i)) {
            *a += x;
        }
    }
    let k = idx.len() as f64;
    if k > 0.0 {
        for a in acc.iter_mut() {
            *a /= k;
        }
    }
    acc
}
