//! `projlens entropy`: spectrum + entropy of one embedding set, and the
//! entropy reduction when a post-projection set is also given.

use std::path::PathBuf;

use clap::Args;
use projlens_core::entropy::von_neumann_entropy;

use crate::error::Result;
use crate::manifest::RunManifest;
use crate::npy::load_matrix;
use crate::report::{write_json, EntropyReportJson, SpectrumJson};

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Embeddings before the projector (NPY, rows are samples)
    #[arg(long)]
    pub before: PathBuf,
    /// Embeddings after the projector (optional; enables the delta)
    #[arg(long)]
    pub after: Option<PathBuf>,
    /// Keep at most this many leading eigenvalues in the report (0 = omit)
    #[arg(long, default_value_t = 32)]
    pub top_eigs: usize,
    /// Report path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EntropyArgs) -> Result<()> {
    let before = load_matrix(&args.before)?;
    let before_report = von_neumann_entropy(&before)?;

    let mut manifest = RunManifest::new("entropy")
        .flag("--top-eigs", args.top_eigs)
        .input(&args.before)?;

    let (after, delta) = match &args.after {
        Some(path) => {
            let after = load_matrix(path)?;
            let report = von_neumann_entropy(&after)?;
            manifest = manifest.input(path)?;
            let delta = before_report.entropy - report.entropy;
            (
                Some(SpectrumJson::from_report(&report, args.top_eigs)),
                Some(delta),
            )
        }
        None => (None, None),
    };

    let report = EntropyReportJson {
        units: "nats",
        before: SpectrumJson::from_report(&before_report, args.top_eigs),
        after,
        delta,
        manifest,
    };
    write_json(&report, &args.out)
}
