//! Patch-aligned projector training.
//!
//! The trainable object is a linear or 2-layer MLP (GELU) projector mapping
//! encoder patch embeddings (dimension d) into the word-embedding space
//! (dimension d'). The patch-alignment loss is one minus the mean cosine
//! between each object's mask-selected mean projected embedding and its
//! label's text embedding; gradients are analytic and checked against
//! central finite differences. The full objective adds an externally
//! computed caption loss through [`CaptionHook`], weighted balance handled
//! by a beta coefficient that ramps linearly across training.
//!
//! Optimization is AdamW (decoupled weight decay) under a cosine
//! learning-rate schedule with optional linear warmup. Every reduction runs
//! in fixed index order with a single accumulator, so a given seed and
//! dataset reproduce bit-identical parameter trajectories.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::random;
use crate::vocab::VocabTable;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// sqrt(2/pi), pinned for the tanh GELU approximation.
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + math::tanh(GELU_C * (z + GELU_A * z * z * z)))
}

#[inline]
fn gelu_prime(z: f64) -> f64 {
    let u = GELU_C * (z + GELU_A * z * z * z);
    let t = math::tanh(u);
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * z * z)
}

/// Projector kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorKind {
    Linear,
    Mlp2,
}

impl ProjectorKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectorKind::Linear => "linear",
            ProjectorKind::Mlp2 => "mlp2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ProjectorKind::Linear),
            "mlp2" => Ok(ProjectorKind::Mlp2),
            _ => Err(Error::InvalidConfig {
                what: "projector kind must be linear or mlp2",
            }),
        }
    }
}

/// Parameters of a projector. Weight matrices are row-major with shape
/// (out, in); the same structure carries gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectorParams {
    Linear {
        weight: DenseMatrix,
        bias: Vec<f64>,
    },
    Mlp2 {
        weight1: DenseMatrix,
        bias1: Vec<f64>,
        weight2: DenseMatrix,
        bias2: Vec<f64>,
    },
}

impl ProjectorParams {
    /// Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn init(
        kind: ProjectorKind,
        d_in: usize,
        hidden: Option<usize>,
        d_out: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidConfig {
                what: "projector dims must be positive",
            });
        }
        let uniform = |rows: usize, cols: usize, rng: &mut ChaCha20Rng| {
            let bound = 1.0 / math::sqrt(cols as f64);
            let mut m = DenseMatrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
            m
        };
        match kind {
            ProjectorKind::Linear => Ok(ProjectorParams::Linear {
                weight: uniform(d_out, d_in, rng),
                bias: vec![0.0; d_out],
            }),
            ProjectorKind::Mlp2 => {
                let h = hidden.unwrap_or(d_out);
                if h == 0 {
                    return Err(Error::InvalidConfig {
                        what: "hidden width must be positive",
                    });
                }
                Ok(ProjectorParams::Mlp2 {
                    weight1: uniform(h, d_in, rng),
                    bias1: vec![0.0; h],
                    weight2: uniform(d_out, h, rng),
                    bias2: vec![0.0; d_out],
                })
            }
        }
    }

    pub fn kind(&self) -> ProjectorKind {
        match self {
            ProjectorParams::Linear { .. } => ProjectorKind::Linear,
            ProjectorParams::Mlp2 { .. } => ProjectorKind::Mlp2,
        }
    }

    /// (d_in, hidden, d_out).
    pub fn dims(&self) -> (usize, Option<usize>, usize) {
        match self {
            ProjectorParams::Linear { weight, .. } => (weight.cols(), None, weight.rows()),
            ProjectorParams::Mlp2 {
                weight1, weight2, ..
            } => (weight1.cols(), Some(weight1.rows()), weight2.rows()),
        }
    }

    /// A same-shaped zero structure (gradient / moment carrier).
    pub fn zeros_like(&self) -> Self {
        match self {
            ProjectorParams::Linear { weight, bias } => ProjectorParams::Linear {
                weight: DenseMatrix::zeros(weight.rows(), weight.cols()),
                bias: vec![0.0; bias.len()],
            },
            ProjectorParams::Mlp2 {
                weight1,
                bias1,
                weight2,
                bias2,
            } => ProjectorParams::Mlp2 {
                weight1: DenseMatrix::zeros(weight1.rows(), weight1.cols()),
                bias1: vec![0.0; bias1.len()],
                weight2: DenseMatrix::zeros(weight2.rows(), weight2.cols()),
                bias2: vec![0.0; bias2.len()],
            },
        }
    }

    /// Flat views of every tensor, in a fixed order shared by `tensors_mut`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ProjectorParams::Linear { weight, bias } => vec![weight.data(), bias],
            ProjectorParams::Mlp2 {
                weight1,
                bias1,
                weight2,
                bias2,
            } => {
                vec![weight1.data(), bias1, weight2.data(), bias2]
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ProjectorParams::Linear { weight, bias } => vec![weight.data_mut(), bias],
            ProjectorParams::Mlp2 {
                weight1,
                bias1,
                weight2,
                bias2,
            } => {
                vec![weight1.data_mut(), bias1, weight2.data_mut(), bias2]
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// One object inside a training sample: the patch indices selected by the
/// half-area rule, and the label's subtoken ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainObject {
    pub patch_indices: Vec<usize>,
    pub token_ids: Vec<usize>,
}

/// One image: pre-projection patch embeddings (S x d) and its objects.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub patches: DenseMatrix,
    pub objects: Vec<TrainObject>,
}

impl TrainSample {
    pub fn validate(&self, vocab: &VocabTable) -> Result<()> {
        let s = self.patches.rows();
        for obj in &self.objects {
            if obj.patch_indices.is_empty() {
                return Err(Error::InvalidConfig {
                    what: "object with empty patch set",
                });
            }
            if obj.token_ids.is_empty() {
                return Err(Error::InvalidConfig {
                    what: "object with empty token list",
                });
            }
            for &i in &obj.patch_indices {
                if i >= s {
                    return Err(Error::PatchIndexOutOfRange {
                        index: i,
                        patches: s,
                    });
                }
            }
            for &t in &obj.token_ids {
                if t >= vocab.len() {
                    return Err(Error::PatchIndexOutOfRange {
                        index: t,
                        patches: vocab.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Linear ramp for the patch-loss weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            start: 0.0,
            end: 5.0,
        }
    }
}

/// Training hyperparameters. The learning-rate schedule is cosine decay to
/// zero with an optional linear warmup fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub beta_schedule: BetaSchedule,
    pub warmup_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 1e-3,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            beta_schedule: BetaSchedule::default(),
            warmup_frac: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig {
                what: "steps must be >= 1",
            });
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidConfig {
                what: "lr must be finite and >= 0",
            });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig {
                what: "weight_decay must be finite and >= 0",
            });
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidConfig {
                what: "adam betas must be in [0, 1)",
            });
        }
        if !(self.warmup_frac >= 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::InvalidConfig {
                what: "warmup fraction must be in [0, 1)",
            });
        }
        Ok(())
    }
}

/// Externally computed caption loss: given the sample index and the
/// projected embeddings, returns the scalar loss and optionally its
/// gradient w.r.t. the projected embeddings (same shape), which is then
/// chained through the projector.
pub trait CaptionHook {
    fn eval(&self, sample_index: usize, v_after: &DenseMatrix) -> (f64, Option<DenseMatrix>);
}

impl<F> CaptionHook for F
where
    F: Fn(usize, &DenseMatrix) -> (f64, Option<DenseMatrix>),
{
    fn eval(&self, sample_index: usize, v_after: &DenseMatrix) -> (f64, Option<DenseMatrix>) {
        self(sample_index, v_after)
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Pre-activations of the hidden layer (S x h); linear projectors keep none.
    pre_activations: Option<DenseMatrix>,
    /// Post-GELU hidden activations (S x h).
    hidden: Option<DenseMatrix>,
}

/// Applies the projector row-wise: S x d in, S x d' out.
pub fn project(params: &ProjectorParams, patches: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(project_with_cache(params, patches)?.0)
}

fn project_with_cache(
    params: &ProjectorParams,
    patches: &DenseMatrix,
) -> Result<(DenseMatrix, ForwardCache)> {
    let (d_in, _, d_out) = params.dims();
    if patches.cols() != d_in {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            got: patches.cols(),
            what: "projector input dimension",
        });
    }
    let s = patches.rows();
    match params {
        ProjectorParams::Linear { weight, bias } => {
            let mut out = DenseMatrix::zeros(s, d_out);
            for i in 0..s {
                let x = patches.row(i);
                let y = out.row_mut(i);
                for (o, yo) in y.iter_mut().enumerate() {
                    *yo = bias[o] + math::dot(weight.row(o), x);
                }
            }
            Ok((
                out,
                ForwardCache {
                    pre_activations: None,
                    hidden: None,
                },
            ))
        }
        ProjectorParams::Mlp2 {
            weight1,
            bias1,
            weight2,
            bias2,
        } => {
            let h = weight1.rows();
            let mut z = DenseMatrix::zeros(s, h);
            let mut a = DenseMatrix::zeros(s, h);
            let mut out = DenseMatrix::zeros(s, d_out);
            for i in 0..s {
                let x = patches.row(i);
                for (j, &b1) in bias1.iter().enumerate() {
                    let zj = b1 + math::dot(weight1.row(j), x);
                    z.set(i, j, zj);
                    a.set(i, j, gelu(zj));
                }
                let ai = a.row(i);
                for (o, yo) in out.row_mut(i).iter_mut().enumerate() {
                    *yo = bias2[o] + math::dot(weight2.row(o), ai);
                }
            }
            Ok((
                out,
                ForwardCache {
                    pre_activations: Some(z),
                    hidden: Some(a),
                },
            ))
        }
    }
}

/// Chains a gradient w.r.t. the projected embeddings back to the
/// parameters, accumulating into `grads`.
fn backprop_into(
    params: &ProjectorParams,
    patches: &DenseMatrix,
    cache: &ForwardCache,
    grad_out: &DenseMatrix,
    grads: &mut ProjectorParams,
) {
    let s = patches.rows();
    match (params, grads) {
        (
            ProjectorParams::Linear { .. },
            ProjectorParams::Linear {
                weight: gw,
                bias: gb,
            },
        ) => {
            let d_in = patches.cols();
            for i in 0..s {
                let x = patches.row(i);
                let g = grad_out.row(i);
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    let wrow = &mut gw.data_mut()[o * d_in..(o + 1) * d_in];
                    for (wk, &xk) in wrow.iter_mut().zip(x) {
                        *wk += go * xk;
                    }
                }
            }
        }
        (
            ProjectorParams::Mlp2 { weight2, .. },
            ProjectorParams::Mlp2 {
                weight1: gw1,
                bias1: gb1,
                weight2: gw2,
                bias2: gb2,
            },
        ) => {
            let z = cache.pre_activations.as_ref().expect("mlp2 cache");
            let a = cache.hidden.as_ref().expect("mlp2 cache");
            let h = weight2.cols();
            let d_in = patches.cols();
            let mut dz = vec![0.0; h];
            for i in 0..s {
                let x = patches.row(i);
                let g = grad_out.row(i);
                let ai = a.row(i);
                let zi = z.row(i);
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb2[o] += go;
                    let wrow = &mut gw2.data_mut()[o * h..(o + 1) * h];
                    for (wk, &ak) in wrow.iter_mut().zip(ai) {
                        *wk += go * ak;
                    }
                }
                for (j, dzj) in dz.iter_mut().enumerate() {
                    let mut da = 0.0;
                    for (o, &go) in g.iter().enumerate() {
                        da += go * weight2.get(o, j);
                    }
                    *dzj = da * gelu_prime(zi[j]);
                }
                for (j, &dzj) in dz.iter().enumerate() {
                    if dzj == 0.0 {
                        continue;
                    }
                    gb1[j] += dzj;
                    let wrow = &mut gw1.data_mut()[j * d_in..(j + 1) * d_in];
                    for (wk, &xk) in wrow.iter_mut().zip(x) {
                        *wk += dzj * xk;
                    }
                }
            }
        }
        _ => unreachable!("gradient carrier shape matches params"),
    }
}

/// Per-object cosines between mask-selected mean projected embeddings and
/// label text embeddings, in object order.
pub fn object_cosines(
    v_after: &DenseMatrix,
    objects: &[TrainObject],
    vocab: &VocabTable,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(objects.len());
    for obj in objects {
        let vbar = mean_rows(v_after, &obj.patch_indices);
        let t = mean_vocab_rows(vocab, &obj.token_ids);
        let nv = math::norm(&vbar);
        let nt = math::norm(&t);
        if nv == 0.0 {
            return Err(Error::ZeroNorm {
                what: "mask-selected mean embedding",
            });
        }
        if nt == 0.0 {
            return Err(Error::ZeroNorm {
                what: "label text embedding",
            });
        }
        out.push(math::dot(&vbar, &t) / (nv * nt));
    }
    Ok(out)
}

/// Patch-alignment loss: 1 - mean object cosine, in [0, 2].
pub fn patch_loss(
    v_after: &DenseMatrix,
    objects: &[TrainObject],
    vocab: &VocabTable,
) -> Result<f64> {
    if objects.is_empty() {
        return Err(Error::NoEvaluableObjects);
    }
    let cosines = object_cosines(v_after, objects, vocab)?;
    Ok(1.0 - cosines.iter().sum::<f64>() / cosines.len() as f64)
}

/// Loss plus its gradient w.r.t. the projected embeddings, and the
/// per-object cosines (reused for metrics).
fn patch_loss_with_dv(
    v_after: &DenseMatrix,
    objects: &[TrainObject],
    vocab: &VocabTable,
) -> Result<(f64, DenseMatrix, Vec<f64>)> {
    if objects.is_empty() {
        return Err(Error::NoEvaluableObjects);
    }
    let d = v_after.cols();
    let p = objects.len() as f64;
    let mut dv = DenseMatrix::zeros(v_after.rows(), d);
    let mut cosines = Vec::with_capacity(objects.len());
    for obj in objects {
        let vbar = mean_rows(v_after, &obj.patch_indices);
        let t = mean_vocab_rows(vocab, &obj.token_ids);
        let nv = math::norm(&vbar);
        let nt = math::norm(&t);
        if nv == 0.0 {
            return Err(Error::ZeroNorm {
                what: "mask-selected mean embedding",
            });
        }
        if nt == 0.0 {
            return Err(Error::ZeroNorm {
                what: "label text embedding",
            });
        }
        let cos = math::dot(&vbar, &t) / (nv * nt);
        cosines.push(cos);
        // d(cos)/d(vbar) = (t_hat - cos * v_hat) / ||vbar||; the loss carries
        // -1/P and the mean over the object's patches carries 1/|idx|.
        let scale = -1.0 / (p * obj.patch_indices.len() as f64 * nv);
        for &i in &obj.patch_indices {
            let row = dv.row_mut(i);
            for k in 0..d {
                let t_hat = t[k] / nt;
                let v_hat = vbar[k] / nv;
                row[k] += scale * (t_hat - cos * v_hat);
            }
        }
    }
    let loss = 1.0 - cosines.iter().sum::<f64>() / p;
    Ok((loss, dv, cosines))
}

/// Exact gradient of `patch_loss(project(params, patches))` w.r.t. every
/// parameter, returned in a same-shaped carrier.
pub fn patch_loss_grad(
    params: &ProjectorParams,
    sample: &TrainSample,
    vocab: &VocabTable,
) -> Result<ProjectorParams> {
    sample.validate(vocab)?;
    let (v_after, cache) = project_with_cache(params, &sample.patches)?;
    let (_, dv, _) = patch_loss_with_dv(&v_after, &sample.objects, vocab)?;
    let mut grads = params.zeros_like();
    backprop_into(params, &sample.patches, &cache, &dv, &mut grads);
    Ok(grads)
}

/// The patch-loss weight at `step` of `total`: a linear ramp hitting `end`
/// at the final step (a single-step schedule sits at `end`).
pub fn beta_at(step: usize, total: usize, schedule: BetaSchedule) -> Result<f64> {
    if step >= total {
        return Err(Error::StepOutOfRange { step, total });
    }
    if total == 1 {
        return Ok(schedule.end);
    }
    let frac = step as f64 / (total - 1) as f64;
    Ok(schedule.start + (schedule.end - schedule.start) * frac)
}

/// Learning rate at `step`: linear warmup over `floor(warmup_frac * total)`
/// steps, then cosine decay from `lr` toward zero.
pub fn lr_at(step: usize, total: usize, lr: f64, warmup_frac: f64) -> f64 {
    let warmup = (warmup_frac * total as f64) as usize;
    if step < warmup {
        return lr * (step + 1) as f64 / warmup as f64;
    }
    let t = (step - warmup) as f64 / (total - warmup) as f64;
    lr * 0.5 * (1.0 + math::cos(core::f64::consts::PI * t))
}

/// The combined objective at one step, broken into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_patch: f64,
    pub l_caption: f64,
    pub beta: f64,
}

/// total = l_caption + beta * l_patch. Without a hook the caption term is 0
/// and the objective is the weighted patch loss alone.
pub fn combined_loss(
    params: &ProjectorParams,
    sample: &TrainSample,
    vocab: &VocabTable,
    step: usize,
    config: &TrainConfig,
    hook: Option<&dyn CaptionHook>,
) -> Result<LossBreakdown> {
    sample.validate(vocab)?;
    let v_after = project(params, &sample.patches)?;
    let l_patch = patch_loss(&v_after, &sample.objects, vocab)?;
    let l_caption = hook.map(|h| h.eval(0, &v_after).0).unwrap_or(0.0);
    let beta = beta_at(step, config.steps, config.beta_schedule)?;
    Ok(LossBreakdown {
        total: l_caption + beta * l_patch,
        l_patch,
        l_caption,
        beta,
    })
}

/// One row of the training history, recorded before each update at the
/// parameters the step saw.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub l_patch: f64,
    pub l_caption: f64,
    pub beta: f64,
    pub lr: f64,
    pub mean_cosine: f64,
}

/// Training result. On divergence (non-finite loss or gradient), training
/// stops early: `params` holds the last finite parameters, the history is
/// truncated, and `diverged_at` records the offending step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ProjectorParams,
    pub history: Vec<HistoryRow>,
    pub diverged_at: Option<usize>,
}

/// Trains a projector on the dataset with AdamW under the configured
/// schedules. Each step takes the full-batch gradient: the mean over
/// samples of the per-sample objective (caption term plus beta times patch
/// loss). Deterministic given the seed.
pub fn train_projector(
    config: &TrainConfig,
    kind: ProjectorKind,
    hidden: Option<usize>,
    dataset: &[TrainSample],
    vocab: &VocabTable,
    hook: Option<&dyn CaptionHook>,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig {
            what: "dataset must be nonempty",
        });
    }
    let d_in = dataset[0].patches.cols();
    for sample in dataset {
        if sample.patches.cols() != d_in {
            return Err(Error::DimensionMismatch {
                expected: d_in,
                got: sample.patches.cols(),
                what: "patch dimension across dataset",
            });
        }
        sample.validate(vocab)?;
    }
    let d_out = vocab.dim();
    let mut rng = random::rng_from_seed(config.seed);
    let mut params = ProjectorParams::init(kind, d_in, hidden, d_out, &mut rng)?;
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let mut history = Vec::with_capacity(config.steps);
    let n = dataset.len() as f64;
    // Last parameters known to evaluate to a finite loss; returned on abort.
    let mut last_good = params.clone();

    for step in 0..config.steps {
        let lr = lr_at(step, config.steps, config.lr, config.warmup_frac);
        let beta = beta_at(step, config.steps, config.beta_schedule)?;

        let mut grads = params.zeros_like();
        let mut sum_patch = 0.0;
        let mut sum_caption = 0.0;
        let mut cosine_sum = 0.0;
        let mut cosine_count = 0usize;

        for (si, sample) in dataset.iter().enumerate() {
            let (v_after, cache) = project_with_cache(&params, &sample.patches)?;
            let (l_patch, dv_patch, cosines) =
                patch_loss_with_dv(&v_after, &sample.objects, vocab)?;
            sum_patch += l_patch;
            cosine_sum += cosines.iter().sum::<f64>();
            cosine_count += cosines.len();

            // d(total)/dV = hook gradient + beta * patch gradient, averaged
            // over samples.
            let mut dv = dv_patch;
            let w = beta / n;
            for g in dv.data_mut() {
                *g *= w;
            }
            if let Some(h) = hook {
                let (l_cap, dcap) = h.eval(si, &v_after);
                sum_caption += l_cap;
                if let Some(dcap) = dcap {
                    for (g, &c) in dv.data_mut().iter_mut().zip(dcap.data()) {
                        *g += c / n;
                    }
                }
            }
            backprop_into(&params, &sample.patches, &cache, &dv, &mut grads);
        }

        let l_patch = sum_patch / n;
        let l_caption = sum_caption / n;
        let loss = l_caption + beta * l_patch;
        let mean_cosine = cosine_sum / cosine_count as f64;

        if !loss.is_finite() || !grads.is_finite() {
            return Ok(TrainOutput {
                params: last_good,
                history,
                diverged_at: Some(step),
            });
        }
        last_good = params.clone();

        history.push(HistoryRow {
            step,
            loss,
            l_patch,
            l_caption,
            beta,
            lr,
            mean_cosine,
        });

        // AdamW: decoupled weight decay scaled by the step's learning rate.
        let t = (step + 1) as f64;
        let bc1 = 1.0 - libm::pow(config.adam_beta1, t);
        let bc2 = 1.0 - libm::pow(config.adam_beta2, t);
        let p_tensors = params.tensors_mut();
        let g_tensors = grads.tensors();
        let m_tensors = m.tensors_mut();
        let v_tensors = v.tensors_mut();
        for (((pt, gt), mt), vt) in p_tensors
            .into_iter()
            .zip(g_tensors)
            .zip(m_tensors)
            .zip(v_tensors)
        {
            for k in 0..pt.len() {
                mt[k] = config.adam_beta1 * mt[k] + (1.0 - config.adam_beta1) * gt[k];
                vt[k] = config.adam_beta2 * vt[k] + (1.0 - config.adam_beta2) * gt[k] * gt[k];
                let m_hat = mt[k] / bc1;
                let v_hat = vt[k] / bc2;
                pt[k] -= lr
                    * (m_hat / (math::sqrt(v_hat) + config.adam_eps) + config.weight_decay * pt[k]);
            }
        }

        if !params.is_finite() {
            // The update itself overflowed; the pre-update snapshot is the
            // last good checkpoint.
            return Ok(TrainOutput {
                params: last_good,
                history,
                diverged_at: Some(step),
            });
        }
    }

    Ok(TrainOutput {
        params,
        history,
        diverged_at: None,
    })
}

fn mean_rows(m: &DenseMatrix, idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for &i in idx {
        for (a, &x) in acc.iter_mut().zip(m.row(i)) {
            *a += x;
        }
    }
    let k = idx.len() as f64;
    for a in acc.iter_mut() {
        *a /= k;
    }
    acc
}

fn mean_vocab_rows(vocab: &VocabTable, ids: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; vocab.dim()];
    for &id in ids {
        for (a, &x) in acc.iter_mut().zip(vocab.embedding(id)) {
            *a += x;
        }
    }
    let k = ids.len() as f64;
    for a in acc.iter_mut() {
        *a /= k;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn identity_vocab(m: usize) -> VocabTable {
        let mut emb = DenseMatrix::zeros(m, m);
        for i in 0..m {
            emb.set(i, i, 1.0);
        }
        VocabTable::new((0..m).map(|i| format!("w{i}")).collect(), emb).unwrap()
    }

    #[test]
    fn identity_linear_projects_unchanged() {
        let mut weight = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            weight.set(i, i, 1.0);
        }
        let p = ProjectorParams::Linear {
            weight,
            bias: vec![0.0; 3],
        };
        let x = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 0.5]).unwrap();
        assert_eq!(project(&p, &x).unwrap(), x);
    }

    #[test]
    fn zero_weight_gives_bias_rows() {
        let p = ProjectorParams::Linear {
            weight: DenseMatrix::zeros(2, 3),
            bias: vec![0.5, -1.0],
        };
        let x = DenseMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        let y = project(&p, &x).unwrap();
        assert_eq!(y.row(0), &[0.5, -1.0]);
        assert_eq!(y.row(1), &[0.5, -1.0]);
    }

    #[test]
    fn project_rejects_dim_mismatch() {
        let p = ProjectorParams::Linear {
            weight: DenseMatrix::zeros(2, 3),
            bias: vec![0.0; 2],
        };
        let x = DenseMatrix::zeros(2, 4);
        assert!(project(&p, &x).is_err());
    }

    #[test]
    fn mlp2_matches_direct_per_row_formula() {
        let mut rng = random::rng_from_seed(42);
        let params = ProjectorParams::init(ProjectorKind::Mlp2, 5, Some(4), 3, &mut rng).unwrap();
        let x = random::normal_matrix(6, 5, &mut rng);
        let y = project(&params, &x).unwrap();
        if let ProjectorParams::Mlp2 {
            weight1,
            bias1,
            weight2,
            bias2,
        } = &params
        {
            for i in 0..6 {
                for (o, &b2) in bias2.iter().enumerate() {
                    let mut acc = b2;
                    for (j, &b1) in bias1.iter().enumerate() {
                        let z = b1 + math::dot(weight1.row(j), x.row(i));
                        acc += weight2.get(o, j) * gelu(z);
                    }
                    assert!(math::abs(acc - y.get(i, o)) < 1e-10);
                }
            }
        } else {
            unreachable!();
        }
    }

    #[test]
    fn patch_loss_extremes() {
        let vocab = identity_vocab(3);
        // vbar equals t exactly.
        let mut v = DenseMatrix::zeros(2, 3);
        v.row_mut(0).copy_from_slice(vocab.embedding(1));
        v.row_mut(1).copy_from_slice(vocab.embedding(1));
        let objects = vec![TrainObject {
            patch_indices: vec![0, 1],
            token_ids: vec![1],
        }];
        assert!(math::abs(patch_loss(&v, &objects, &vocab).unwrap()) < 1e-15);

        // vbar = -t.
        let mut v2 = DenseMatrix::zeros(1, 3);
        v2.set(0, 1, -1.0);
        let objects2 = vec![TrainObject {
            patch_indices: vec![0],
            token_ids: vec![1],
        }];
        assert!(math::abs(patch_loss(&v2, &objects2, &vocab).unwrap() - 2.0) < 1e-15);

        // vbar orthogonal to t.
        let mut v3 = DenseMatrix::zeros(1, 3);
        v3.set(0, 0, 1.0);
        assert!(math::abs(patch_loss(&v3, &objects2, &vocab).unwrap() - 1.0) < 1e-15);
    }

    #[test]
    fn patch_loss_error_paths() {
        let vocab = identity_vocab(2);
        let v = DenseMatrix::zeros(1, 2);
        assert_eq!(
            patch_loss(&v, &[], &vocab).unwrap_err(),
            Error::NoEvaluableObjects
        );
        let objects = vec![TrainObject {
            patch_indices: vec![0],
            token_ids: vec![0],
        }];
        assert!(matches!(
            patch_loss(&v, &objects, &vocab).unwrap_err(),
            Error::ZeroNorm { .. }
        ));
    }

    #[test]
    fn beta_schedule_endpoints_and_midpoint() {
        let sched = BetaSchedule::default();
        assert_eq!(beta_at(0, 101, sched).unwrap(), 0.0);
        assert_eq!(beta_at(100, 101, sched).unwrap(), 5.0);
        assert_eq!(beta_at(50, 101, sched).unwrap(), 2.5);
        assert_eq!(beta_at(0, 1, sched).unwrap(), 5.0);
        assert!(beta_at(5, 5, sched).is_err());
        let mut prev = 0.0;
        for step in 0..101 {
            let b = beta_at(step, 101, sched).unwrap();
            assert!(b >= prev, "beta must be non-decreasing");
            prev = b;
        }
    }

    #[test]
    fn lr_schedule_decays_to_zero() {
        let total = 100;
        let lr0 = lr_at(0, total, 1e-3, 0.0);
        assert!((lr0 - 1e-3).abs() < 1e-18);
        let mut prev = lr0;
        for s in 1..total {
            let l = lr_at(s, total, 1e-3, 0.0);
            assert!(l <= prev);
            prev = l;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn warmup_rises_then_cosine_falls() {
        let total = 100;
        let warm = 0.1;
        assert!(lr_at(0, total, 1.0, warm) < lr_at(9, total, 1.0, warm));
        assert!((lr_at(10, total, 1.0, warm) - 1.0).abs() < 1e-15);
        for s in 10..total - 1 {
            assert!(lr_at(s, total, 1.0, warm) >= lr_at(s + 1, total, 1.0, warm));
        }
    }

    #[test]
    fn combined_loss_arithmetic() {
        let vocab = identity_vocab(2);
        let mut patches = DenseMatrix::zeros(1, 2);
        patches.set(0, 0, 1.0);
        let sample = TrainSample {
            patches,
            objects: vec![TrainObject {
                patch_indices: vec![0],
                token_ids: vec![0],
            }],
        };
        let mut weight = DenseMatrix::zeros(2, 2);
        weight.set(0, 0, 1.0);
        weight.set(1, 1, 1.0);
        let params = ProjectorParams::Linear {
            weight,
            bias: vec![0.0; 2],
        };
        // Constant beta 5; perfect alignment makes l_patch 0.
        let config = TrainConfig {
            steps: 10,
            beta_schedule: BetaSchedule {
                start: 5.0,
                end: 5.0,
            },
            ..TrainConfig::default()
        };
        let lb = combined_loss(&params, &sample, &vocab, 3, &config, None).unwrap();
        assert_eq!(lb.l_caption, 0.0);
        assert_eq!(lb.beta, 5.0);
        assert!(math::abs(lb.total) < 1e-15);

        // A hook contributes its scalar directly.
        let hook = |_: usize, _: &DenseMatrix| (1.3, None);
        let config0 = TrainConfig {
            steps: 10,
            beta_schedule: BetaSchedule {
                start: 0.0,
                end: 0.0,
            },
            ..TrainConfig::default()
        };
        let lb2 = combined_loss(&params, &sample, &vocab, 0, &config0, Some(&hook)).unwrap();
        assert!(math::abs(lb2.total - 1.3) < 1e-15);
        assert_eq!(lb2.l_caption, 1.3);
    }

    #[test]
    fn hookless_total_is_beta_times_patch_loss() {
        // l_patch = 0.4 (cosine 0.6), constant beta 5: total = 2.0.
        let emb = DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let vocab = VocabTable::new(vec!["w".into()], emb).unwrap();
        let sample = TrainSample {
            patches: DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap(),
            objects: vec![TrainObject {
                patch_indices: vec![0],
                token_ids: vec![0],
            }],
        };
        // Projector sends the patch to (0.6, 0.8): cosine with (1, 0) is 0.6.
        let weight = DenseMatrix::new(2, 2, vec![0.6, 0.0, 0.8, 0.0]).unwrap();
        let params = ProjectorParams::Linear {
            weight,
            bias: vec![0.0; 2],
        };
        let config = TrainConfig {
            steps: 3,
            beta_schedule: BetaSchedule {
                start: 5.0,
                end: 5.0,
            },
            ..TrainConfig::default()
        };
        let lb = combined_loss(&params, &sample, &vocab, 1, &config, None).unwrap();
        assert!(math::abs(lb.l_patch - 0.4) < 1e-12);
        assert_eq!(lb.l_caption, 0.0);
        assert!(math::abs(lb.total - 2.0) < 1e-12);
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let vocab = identity_vocab(2);
        let sample = TrainSample {
            patches: DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            objects: vec![TrainObject {
                patch_indices: vec![0, 1],
                token_ids: vec![0],
            }],
        };
        let config = TrainConfig {
            steps: 5,
            lr: 0.0,
            weight_decay: 0.1,
            ..Default::default()
        };
        let out = train_projector(
            &config,
            ProjectorKind::Linear,
            None,
            &[sample],
            &vocab,
            None,
        )
        .unwrap();
        let mut rng = random::rng_from_seed(config.seed);
        let init = ProjectorParams::init(ProjectorKind::Linear, 2, None, 2, &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.history.len(), 5);
    }

    #[test]
    fn one_sample_linear_converges() {
        let vocab = identity_vocab(4);
        let mut rng = random::rng_from_seed(3);
        let patches = random::normal_matrix(6, 4, &mut rng);
        let sample = TrainSample {
            patches,
            objects: vec![
                TrainObject {
                    patch_indices: vec![0, 1, 2],
                    token_ids: vec![0],
                },
                TrainObject {
                    patch_indices: vec![3, 4, 5],
                    token_ids: vec![2, 3],
                },
            ],
        };
        let config = TrainConfig {
            steps: 500,
            seed: 1,
            ..Default::default()
        };
        let out = train_projector(
            &config,
            ProjectorKind::Linear,
            None,
            &[sample],
            &vocab,
            None,
        )
        .unwrap();
        assert!(out.diverged_at.is_none());
        let last = out.history.last().unwrap();
        assert!(last.l_patch < 0.05, "final l_patch = {}", last.l_patch);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let vocab = identity_vocab(3);
        let mut rng = random::rng_from_seed(8);
        let dataset: Vec<TrainSample> = (0..3)
            .map(|_| TrainSample {
                patches: random::normal_matrix(4, 3, &mut rng),
                objects: vec![TrainObject {
                    patch_indices: vec![0, 2],
                    token_ids: vec![1],
                }],
            })
            .collect();
        let config = TrainConfig {
            steps: 50,
            seed: 9,
            ..Default::default()
        };
        let a =
            train_projector(&config, ProjectorKind::Mlp2, None, &dataset, &vocab, None).unwrap();
        let b =
            train_projector(&config, ProjectorKind::Mlp2, None, &dataset, &vocab, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn hook_gradient_is_chained() {
        // Hook loss ||V - T||^2 / 2 with gradient (V - T): training should
        // pull the projected embeddings toward T.
        let vocab = identity_vocab(2);
        let mut rng = random::rng_from_seed(5);
        let patches = random::normal_matrix(2, 2, &mut rng);
        let sample = TrainSample {
            patches: patches.clone(),
            objects: vec![TrainObject {
                patch_indices: vec![0, 1],
                token_ids: vec![0],
            }],
        };
        let target = DenseMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let t2 = target.clone();
        let hook = move |_: usize, v: &DenseMatrix| {
            let mut loss = 0.0;
            let mut grad = DenseMatrix::zeros(v.rows(), v.cols());
            for (k, (&a, &b)) in v.data().iter().zip(t2.data()).enumerate() {
                loss += 0.5 * (a - b) * (a - b);
                grad.data_mut()[k] = a - b;
            }
            (loss, Some(grad))
        };
        let config = TrainConfig {
            steps: 800,
            lr: 1e-2,
            beta_schedule: BetaSchedule {
                start: 0.0,
                end: 0.0,
            },
            ..Default::default()
        };
        let out = train_projector(
            &config,
            ProjectorKind::Linear,
            None,
            core::slice::from_ref(&sample),
            &vocab,
            Some(&hook),
        )
        .unwrap();
        let first = out.history.first().unwrap().l_caption;
        let last = out.history.last().unwrap().l_caption;
        assert!(last < first * 0.01, "caption loss {first} -> {last}");
    }

    #[test]
    fn divergence_returns_last_finite_params() {
        let vocab = identity_vocab(2);
        let sample = TrainSample {
            patches: DenseMatrix::new(1, 2, vec![1.0, 0.5]).unwrap(),
            objects: vec![TrainObject {
                patch_indices: vec![0],
                token_ids: vec![0],
            }],
        };
        // A hook that detonates after a few steps.
        use core::cell::Cell;
        let count = Cell::new(0usize);
        let hook = move |_: usize, v: &DenseMatrix| {
            count.set(count.get() + 1);
            if count.get() > 3 {
                (f64::INFINITY, None)
            } else {
                (0.0, Some(DenseMatrix::zeros(v.rows(), v.cols())))
            }
        };
        let config = TrainConfig {
            steps: 10,
            ..Default::default()
        };
        let out = train_projector(
            &config,
            ProjectorKind::Linear,
            None,
            core::slice::from_ref(&sample),
            &vocab,
            Some(&hook),
        )
        .unwrap();
        assert_eq!(out.diverged_at, Some(3));
        assert_eq!(out.history.len(), 3);
        assert!(out.params.is_finite());
    }

    #[test]
    fn smoothed_loss_decreases_on_realizable_instance() {
        let vocab = identity_vocab(3);
        let mut rng = random::rng_from_seed(12);
        let patches = random::normal_matrix(4, 3, &mut rng);
        let sample = TrainSample {
            patches,
            objects: vec![TrainObject {
                patch_indices: vec![0, 1, 2, 3],
                token_ids: vec![1],
            }],
        };
        let config = TrainConfig {
            steps: 200,
            beta_schedule: BetaSchedule {
                start: 5.0,
                end: 5.0,
            },
            seed: 2,
            ..Default::default()
        };
        let out = train_projector(
            &config,
            ProjectorKind::Linear,
            None,
            core::slice::from_ref(&sample),
            &vocab,
            None,
        )
        .unwrap();
        let smooth: Vec<f64> = out
            .history
            .windows(10)
            .map(|w| w.iter().map(|r| r.loss).sum::<f64>() / 10.0)
            .collect();
        assert!(smooth.last().unwrap() < smooth.first().unwrap());
    }
}
