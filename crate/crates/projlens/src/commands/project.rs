//! `projlens project`: apply a trained checkpoint to embeddings, producing
//! the post-projection NPYs that `entropy`, `align`, and `tokenmap` read.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use projlens_core::trainer::project;

use crate::commands::with_worker_pool;
use crate::dataset::{load_checkpoint, npy_files};
use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;
use crate::npy::{load_matrix, save_matrix};
use crate::report::write_json;

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Checkpoint directory (metadata.json + parameter NPYs)
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An NPY file, or a directory of NPYs (e.g. a dataset directory)
    #[arg(long)]
    pub input: PathBuf,
    /// Output file (file input) or directory (directory input)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &ProjectArgs) -> Result<()> {
    let (params, _) = load_checkpoint(&args.checkpoint)?;

    if args.input.is_dir() {
        let files = npy_files(&args.input)?;
        if files.is_empty() {
            return Err(CliError::BadInput {
                path: args.input.clone(),
                what: "directory holds no .npy files".into(),
            });
        }
        fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
        let results: Vec<Result<()>> = with_worker_pool(|| {
            files
                .par_iter()
                .map(|file| {
                    let patches = load_matrix(file)?;
                    let projected = project(&params, &patches)?;
                    let name = file.file_name().expect("npy file name");
                    save_matrix(&projected, &args.out.join(name))
                })
                .collect()
        });
        for r in results {
            r?;
        }
        let manifest = RunManifest::new("project")
            .input(&args.checkpoint)?
            .input(&args.input)?;
        write_json(&manifest, &args.out.join("manifest.json"))
    } else {
        let patches = load_matrix(&args.input)?;
        let projected = project(&params, &patches)?;
        save_matrix(&projected, &args.out)
    }
}
