//! Synthetic dataset with a planted solution.
//!
//! Builds images on a square patch grid split into rectangular regions, one
//! object per region. A hidden linear projector with orthonormal rows maps
//! the planted pre-projection patches so that each object's mean patch
//! embedding lands exactly on its label's (unit) text embedding before
//! noise; isotropic Gaussian noise is then added in the input space. Under
//! the hidden projector the patch loss is therefore near zero, training
//! from scratch has a realizable target, and matching pursuit on the true
//! projections recovers the planted tokens.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask_geom::{patch_set_to_mask, rle_encode, PatchGrid};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::pad::{MaskAnnotation, PadRecord};
use crate::random;
use crate::trainer::{ProjectorParams, TrainObject, TrainSample};
use crate::vocab::VocabTable;

/// Spread of per-patch variation around each object's planted direction
/// (zero-sum within an object, so object means are exact before noise).
const PLANT_JITTER: f64 = 0.1;

/// Pixel side of a synthetic patch.
const PATCH_PX: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    /// Patch count S; must be a perfect square.
    pub patches: usize,
    /// Pre-projection dimension d (must be >= d_prime so planting is exact).
    pub d: usize,
    /// Post-projection dimension d'.
    pub d_prime: usize,
    pub vocab_size: usize,
    /// Tokens per object label.
    pub sparsity: usize,
    /// Isotropic noise added to planted pre-projection patches.
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_images: 256,
            patches: 16,
            d: 32,
            d_prime: 24,
            vocab_size: 64,
            sparsity: 2,
            noise_sigma: 0.05,
        }
    }
}

/// What the generator knows and the trainee does not.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// The hidden linear projector (orthonormal rows, zero bias).
    pub projector: ProjectorParams,
    /// Per image, per patch: the planted token ids of the patch's object.
    pub planted_tokens: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Vec<TrainSample>,
    pub vocab: VocabTable,
    /// Annotation records matching the dataset, masks tiling the grid.
    pub records: Vec<PadRecord>,
    pub grid: PatchGrid,
    pub truth: SynthTruth,
}

/// Generates the dataset. Deterministic: the same config yields
/// bit-identical output.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthOutput> {
    validate(cfg)?;
    let side = int_sqrt(cfg.patches);
    let grid = PatchGrid::new(side, side, PATCH_PX)?;
    let regions = grid_regions(side);

    let mut rng = random::rng_from_seed(cfg.seed);

    // Vocabulary: orthonormal rows when they fit, unit-norm rows otherwise.
    let emb = if cfg.vocab_size <= cfg.d_prime {
        random::orthonormal_rows(cfg.vocab_size, cfg.d_prime, &mut rng)
    } else {
        let mut m = random::normal_matrix(cfg.vocab_size, cfg.d_prime, &mut rng);
        for i in 0..m.rows() {
            let n = math::norm(m.row(i));
            for v in m.row_mut(i) {
                *v /= n;
            }
        }
        m
    };
    let tokens: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i:03}")).collect();
    let vocab = VocabTable::new(tokens, emb)?;

    // Hidden projector: orthonormal rows so transposition inverts it exactly.
    let p_star = random::orthonormal_rows(cfg.d_prime, cfg.d, &mut rng);

    let mut dataset = Vec::with_capacity(cfg.n_images);
    let mut records = Vec::with_capacity(cfg.n_images);
    let mut planted_tokens = Vec::with_capacity(cfg.n_images);

    for img in 0..cfg.n_images {
        let mut patches = DenseMatrix::zeros(cfg.patches, cfg.d);
        let mut objects = Vec::with_capacity(regions.len());
        let mut labels = Vec::with_capacity(regions.len());
        let mut per_patch: Vec<Vec<usize>> = alloc::vec![Vec::new(); cfg.patches];

        let ids = draw_distinct(&mut rng, cfg.vocab_size, regions.len() * cfg.sparsity);
        for (obj_i, region) in regions.iter().enumerate() {
            let token_ids: Vec<usize> =
                ids[obj_i * cfg.sparsity..(obj_i + 1) * cfg.sparsity].to_vec();
            let t = mean_rows_of(&vocab, &token_ids);
            let tn = math::norm(&t);
            let t_hat: Vec<f64> = t.iter().map(|x| x / tn).collect();

            // Zero-sum jitter: the object's mean target is exactly t_hat.
            let idx = region.clone();
            let k = idx.len();
            let mut jitter: Vec<Vec<f64>> = (0..k)
                .map(|_| random::normal_vector(cfg.d_prime, &mut rng))
                .collect();
            let mut mean = alloc::vec![0.0; cfg.d_prime];
            for j in &jitter {
                for (m, &x) in mean.iter_mut().zip(j) {
                    *m += x / k as f64;
                }
            }
            for j in jitter.iter_mut() {
                for (x, &m) in j.iter_mut().zip(&mean) {
                    *x -= m;
                }
            }

            for (pi, &patch) in idx.iter().enumerate() {
                // x = P*^T (t_hat + jitter), so P* x = t_hat + jitter.
                let row = patches.row_mut(patch);
                for out_dim in 0..cfg.d_prime {
                    let y = t_hat[out_dim] + PLANT_JITTER * jitter[pi][out_dim];
                    for (xk, &pk) in row.iter_mut().zip(p_star.row(out_dim)) {
                        *xk += y * pk;
                    }
                }
                per_patch[patch] = token_ids.clone();
            }

            let tag = token_ids
                .iter()
                .map(|&id| vocab.token(id))
                .collect::<Vec<_>>()
                .join(" ");
            let mask = patch_set_to_mask(&idx, &grid)?;
            let (y0, x0, y1, x1) = region_bbox(&idx, &grid);
            labels.push(MaskAnnotation::new(
                tag,
                [x0 as f64, y0 as f64, x1 as f64, y1 as f64],
                Some(rle_encode(&mask)),
                grid.input_h(),
                grid.input_w(),
            )?);
            objects.push(TrainObject {
                patch_indices: idx,
                token_ids,
            });
        }

        if cfg.noise_sigma > 0.0 {
            for v in patches.data_mut() {
                *v += cfg.noise_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }

        records.push(PadRecord::new(
            format!("img_{img:05}"),
            grid.input_w(),
            grid.input_h(),
            format!("synthetic scene {img}"),
            labels,
        )?);
        dataset.push(TrainSample { patches, objects });
        planted_tokens.push(per_patch);
    }

    let truth = SynthTruth {
        projector: ProjectorParams::Linear {
            weight: p_star,
            bias: alloc::vec![0.0; cfg.d_prime],
        },
        planted_tokens,
    };
    Ok(SynthOutput {
        dataset,
        vocab,
        records,
        grid,
        truth,
    })
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    if cfg.n_images == 0 {
        return Err(Error::InvalidConfig {
            what: "n_images must be >= 1",
        });
    }
    let side = int_sqrt(cfg.patches);
    if side * side != cfg.patches || cfg.patches == 0 {
        return Err(Error::InvalidConfig {
            what: "patch count must be a perfect square",
        });
    }
    if cfg.d == 0 || cfg.d_prime == 0 {
        return Err(Error::InvalidConfig {
            what: "dimensions must be positive",
        });
    }
    if cfg.d < cfg.d_prime {
        return Err(Error::InvalidConfig {
            what: "d must be >= d_prime",
        });
    }
    if cfg.sparsity == 0 {
        return Err(Error::InvalidConfig {
            what: "sparsity must be >= 1",
        });
    }
    let n_regions = if side == 1 { 1 } else { 4 };
    if cfg.vocab_size < n_regions * cfg.sparsity {
        return Err(Error::InvalidConfig {
            what: "vocab too small for distinct object labels",
        });
    }
    if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig {
            what: "noise_sigma must be finite and >= 0",
        });
    }
    Ok(())
}

fn int_sqrt(n: usize) -> usize {
    let mut s = math::sqrt(n as f64) as usize;
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    while s * s > n {
        s -= 1;
    }
    s
}

/// Quadrant patch-index sets of a side x side grid (the whole grid when
/// side == 1), row-major within each region.
fn grid_regions(side: usize) -> Vec<Vec<usize>> {
    if side == 1 {
        return alloc::vec![alloc::vec![0]];
    }
    let half = side / 2;
    let row_ranges = [(0, half), (half, side)];
    let col_ranges = [(0, half), (half, side)];
    let mut regions = Vec::with_capacity(4);
    for (r0, r1) in row_ranges {
        for (c0, c1) in col_ranges {
            let mut idx = Vec::new();
            for r in r0..r1 {
                for c in c0..c1 {
                    idx.push(r * side + c);
                }
            }
            regions.push(idx);
        }
    }
    regions
}

/// Pixel bounding box (y0, x0, y1, x1) of a patch-index set.
fn region_bbox(idx: &[usize], grid: &PatchGrid) -> (usize, usize, usize, usize) {
    let mut y0 = usize::MAX;
    let mut x0 = usize::MAX;
    let mut y1 = 0;
    let mut x1 = 0;
    for &i in idx {
        let (py0, px0, py1, px1) = grid.patch_rect(i);
        y0 = y0.min(py0);
        x0 = x0.min(px0);
        y1 = y1.max(py1);
        x1 = x1.max(px1);
    }
    (y0, x0, y1, x1)
}

fn mean_rows_of(vocab: &VocabTable, ids: &[usize]) -> Vec<f64> {
    let mut acc = alloc::vec![0.0; vocab.dim()];
    for &id in ids {
        for (a, &x) in acc.iter_mut().zip(vocab.embedding(id)) {
            *a += x;
        }
    }
    for a in acc.iter_mut() {
        *a /= ids.len() as f64;
    }
    acc
}

/// `count` distinct values in `0..bound`, order determined by the stream.
fn draw_distinct(rng: &mut rand_chacha::ChaCha20Rng, bound: usize, count: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = rng.random_range(0..bound);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}
