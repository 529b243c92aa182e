//! `projlens pad`: validation and corpus statistics for annotation files.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand};

use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;
use crate::pad_io::{parse_pad, validate_pad};
use crate::report::{write_json, PadProblemJson, PadStatsJson, PadValidateJson};

#[derive(Debug, Args)]
pub struct PadArgs {
    #[command(subcommand)]
    pub action: PadAction,
}

#[derive(Debug, Subcommand)]
pub enum PadAction {
    /// Check every record; exits nonzero if any record is invalid
    Validate {
        /// Annotation records (JSON array)
        #[arg(long)]
        pad: PathBuf,
        /// Report path (JSON); stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record, region, and unique-tag counts
    Stats {
        #[arg(long)]
        pad: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(args: &PadArgs) -> Result<()> {
    match &args.action {
        PadAction::Validate { pad, out } => {
            let bytes = fs::read(pad).map_err(io_err(pad))?;
            let (records, problems) = validate_pad(&bytes, pad)?;
            let report = PadValidateJson {
                records,
                valid: records - problems.len(),
                problems: problems
                    .into_iter()
                    .map(|(index, image_id, error)| PadProblemJson {
                        index,
                        image_id,
                        error,
                    })
                    .collect(),
                manifest: RunManifest::new("pad validate").input(pad)?,
            };
            let invalid = !report.problems.is_empty();
            emit(&report, out)?;
            if invalid {
                return Err(CliError::BadInput {
                    path: pad.clone(),
                    what: format!("{} invalid record(s)", report.problems.len()),
                });
            }
            Ok(())
        }
        PadAction::Stats { pad, out } => {
            let bytes = fs::read(pad).map_err(io_err(pad))?;
            let records = parse_pad(&bytes, pad)?;
            let regions: usize = records.iter().map(|r| r.labels.len()).sum();
            let tags: BTreeSet<&str> = records
                .iter()
                .flat_map(|r| r.labels.iter().map(|l| l.tag.as_str()))
                .collect();
            let report = PadStatsJson {
                records: records.len(),
                regions,
                unique_tags: tags.len(),
                manifest: RunManifest::new("pad stats").input(pad)?,
            };
            emit(&report, out)
        }
    }
}

fn emit<T: serde::Serialize>(report: &T, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => write_json(report, path),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(report).expect("report serialization")
            );
            Ok(())
        }
    }
}
