//! `projlens train`: patch-aligned projector training on a dataset
//! directory, producing a checkpoint, a history CSV, and a run manifest.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use projlens_core::trainer::{train_projector, BetaSchedule, ProjectorKind, TrainConfig};

use crate::dataset::{load_dataset, save_checkpoint, save_history};
use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;
use crate::report::write_json;
use crate::vocab_io::load_vocab;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (manifest.json + one NPY per image)
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub vocab_emb: PathBuf,
    #[arg(long)]
    pub vocab_tok: PathBuf,
    /// Optimizer steps (each step is a full pass over the dataset)
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Peak learning rate of the cosine schedule
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Patch-loss weight at the first step
    #[arg(long, default_value_t = 0.0)]
    pub beta_start: f64,
    /// Patch-loss weight at the final step
    #[arg(long, default_value_t = 5.0)]
    pub beta_end: f64,
    /// Linear warmup fraction of total steps
    #[arg(long, default_value_t = 0.0)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Projector kind: linear | mlp2
    #[arg(long, default_value = "mlp2")]
    pub projector: String,
    /// Hidden width for mlp2 (defaults to the word-embedding dimension)
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Output directory (checkpoint/, history.csv, manifest.json)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let kind = ProjectorKind::parse(&args.projector)?;
    let vocab = load_vocab(&args.vocab_emb, &args.vocab_tok)?;
    let (_, samples) = load_dataset(&args.dataset)?;
    let config = TrainConfig {
        steps: args.steps,
        lr: args.lr,
        weight_decay: args.weight_decay,
        beta_schedule: BetaSchedule {
            start: args.beta_start,
            end: args.beta_end,
        },
        warmup_frac: args.warmup,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let output = train_projector(&config, kind, args.hidden, &samples, &vocab, None)?;

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let completed = output.history.len();
    save_checkpoint(
        &args.out.join("checkpoint"),
        &output.params,
        completed,
        args.seed,
    )?;
    save_history(&output.history, &args.out.join("history.csv"))?;

    let manifest = RunManifest::new("train")
        .seed(args.seed)
        .flag("--steps", args.steps)
        .flag("--lr", args.lr)
        .flag("--weight-decay", args.weight_decay)
        .flag("--beta-start", args.beta_start)
        .flag("--beta-end", args.beta_end)
        .flag("--warmup", args.warmup)
        .flag("--projector", kind.name())
        .flag_opt("--hidden", args.hidden)
        .input(&args.dataset)?
        .input(&args.vocab_emb)?
        .input(&args.vocab_tok)?;
    write_json(&manifest, &args.out.join("manifest.json"))?;

    match output.diverged_at {
        Some(step) => Err(CliError::Diverged { step }),
        None => Ok(()),
    }
}
