//! IO, file formats, and CLI plumbing around `projlens-core`.
//!
//! Formats:
//! - embeddings and parameter tensors: NPY v1.0, 2-d little-endian
//!   `<f4`/`<f8` ([`npy`]);
//! - annotation records: a JSON array with width-first `size` and COCO
//!   compressed RLE masks ([`pad_io`]);
//! - vocabularies: an NPY matrix plus an LF-separated token file
//!   ([`vocab_io`]);
//! - datasets, checkpoints, and training history ([`dataset`]);
//! - reports: JSON with an embedded [`manifest::RunManifest`] carrying
//!   resolved flags and sha256 input digests, byte-identical across reruns
//!   on identical inputs.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod npy;
pub mod pad_io;
pub mod report;
pub mod vocab_io;

pub use error::{CliError, Result};
