//! `projlens synth`: deterministic synthetic dataset with a planted
//! solution, written in the exact layouts `train`, `project`, and `align`
//! consume.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use projlens_core::synth::{synth_dataset, SynthConfig};

use crate::dataset::{save_checkpoint, save_dataset};
use crate::error::{io_err, Result};
use crate::manifest::RunManifest;
use crate::pad_io::save_pad;
use crate::report::write_json;
use crate::vocab_io::save_vocab;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub images: usize,
    /// Patches per image (a perfect square)
    #[arg(long, default_value_t = 16)]
    pub patches: usize,
    /// Pre-projection dimension d
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Post-projection dimension d'
    #[arg(long, default_value_t = 24)]
    pub dim_out: usize,
    /// Vocabulary size
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    /// Tokens per object label
    #[arg(long, default_value_t = 2)]
    pub sparsity: usize,
    /// Isotropic noise added to planted patches
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GridJson {
    grid_h: usize,
    grid_w: usize,
    patch_px: usize,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_images: args.images,
        patches: args.patches,
        d: args.dim,
        d_prime: args.dim_out,
        vocab_size: args.vocab,
        sparsity: args.sparsity,
        noise_sigma: args.noise,
    };
    let output = synth_dataset(&cfg)?;

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let ids: Vec<String> = output.records.iter().map(|r| r.image_id.clone()).collect();
    save_dataset(&args.out.join("dataset"), &ids, &output.dataset)?;
    save_pad(&output.records, &args.out.join("pad.json"))?;
    save_vocab(
        &output.vocab,
        &args.out.join("vocab.npy"),
        &args.out.join("vocab.txt"),
    )?;
    save_checkpoint(
        &args.out.join("truth"),
        &output.truth.projector,
        0,
        args.seed,
    )?;
    write_json(
        &output.truth.planted_tokens,
        &args.out.join("truth").join("planted.json"),
    )?;
    write_json(
        &GridJson {
            grid_h: output.grid.grid_h,
            grid_w: output.grid.grid_w,
            patch_px: output.grid.patch_px,
        },
        &args.out.join("grid.json"),
    )?;

    let manifest = RunManifest::new("synth")
        .seed(args.seed)
        .flag("--images", args.images)
        .flag("--patches", args.patches)
        .flag("--dim", args.dim)
        .flag("--dim-out", args.dim_out)
        .flag("--vocab", args.vocab)
        .flag("--sparsity", args.sparsity)
        .flag("--noise", args.noise);
    write_json(&manifest, &args.out.join("manifest.json"))
}
