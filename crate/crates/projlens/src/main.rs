use clap::{Parser, Subcommand};
use serde_json::json;

use projlens::commands;

/// Quantifies how a multimodal projector compresses and aligns vision-patch
/// embeddings with a language model's word-embedding space, and trains
/// small projectors with a patch-alignment loss on exported embeddings.
#[derive(Parser)]
#[command(name = "projlens", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Von Neumann entropy of embedding sets, and the reduction across a projector
    Entropy(commands::entropy::EntropyArgs),
    /// Patch-level localization IoU against ground-truth masks
    Align(commands::align::AlignArgs),
    /// Matching-pursuit token decomposition of every patch
    Tokenmap(commands::tokenmap::TokenmapArgs),
    /// Train a projector with the patch-alignment loss
    Train(commands::train::TrainArgs),
    /// Validate annotation files or report corpus statistics
    Pad(commands::pad::PadArgs),
    /// Greedy non-maximum suppression over scored boxes
    Nms(commands::nms::NmsArgs),
    /// Generate a synthetic dataset with a planted solution
    Synth(commands::synth::SynthArgs),
    /// Apply a trained checkpoint to embeddings
    Project(commands::project::ProjectArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Entropy(args) => commands::entropy::run(args),
        Command::Align(args) => commands::align::run(args),
        Command::Tokenmap(args) => commands::tokenmap::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Pad(args) => commands::pad::run(args),
        Command::Nms(args) => commands::nms::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Project(args) => commands::project::run(args),
    };
    if let Err(e) = result {
        eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
        std::process::exit(1);
    }
}
