//! `projlens tokenmap`: matching-pursuit decomposition of every patch over
//! the vocabulary, annotated for rendering.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use projlens_core::pursuit::{tokenmap, PursuitOptions};

use crate::error::{io_err, Result};
use crate::manifest::RunManifest;
use crate::npy::load_matrix;
use crate::report::{write_json, TokenMapJson};
use crate::vocab_io::{load_vocab, load_wordlist};

#[derive(Debug, Args)]
pub struct TokenmapArgs {
    /// Projected patch embeddings (NPY, S x d')
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub vocab_emb: PathBuf,
    #[arg(long)]
    pub vocab_tok: PathBuf,
    /// Pursuit iterations per patch
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Word list for the recognized flag (one word per line)
    #[arg(long)]
    pub wordlist: Option<PathBuf>,
    /// Select atoms by |inner product| instead of the signed value
    #[arg(long)]
    pub absolute: bool,
    /// Forbid re-selecting an atom within one patch
    #[arg(long)]
    pub distinct: bool,
    /// Optional CSV of per-iteration cosines (patch,iter,cosine)
    #[arg(long)]
    pub cosine_csv: Option<PathBuf>,
    /// Report path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &TokenmapArgs) -> Result<()> {
    let v = load_matrix(&args.embeddings)?;
    let vocab = load_vocab(&args.vocab_emb, &args.vocab_tok)?;
    let words = args.wordlist.as_deref().map(load_wordlist).transpose()?;
    let opts = PursuitOptions {
        k: args.k,
        absolute: args.absolute,
        distinct: args.distinct,
    };
    let entries = tokenmap(&v, &vocab, opts, words.as_ref())?;

    if let Some(path) = &args.cosine_csv {
        let mut csv = String::from("patch,iter,cosine\n");
        for entry in &entries {
            for (iter, step) in entry.steps.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", entry.patch, iter + 1, step.cosine));
            }
        }
        fs::write(path, csv).map_err(io_err(path))?;
    }

    let manifest = RunManifest::new("tokenmap")
        .flag("--k", args.k)
        .flag("--absolute", args.absolute)
        .flag("--distinct", args.distinct)
        .input(&args.embeddings)?
        .input(&args.vocab_emb)?
        .input(&args.vocab_tok)?;
    let manifest = match &args.wordlist {
        Some(p) => manifest.input(p)?,
        None => manifest,
    };

    write_json(
        &TokenMapJson::from_entries(args.k, &entries, manifest),
        &args.out,
    )
}
