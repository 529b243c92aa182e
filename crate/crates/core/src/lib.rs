//! Core algorithms for measuring how a multimodal projector compresses and
//! aligns vision-patch embeddings with an LLM's word-embedding space.
//!
//! The crate is organized around three measurements and one training loop:
//!
//! - [`entropy`]: Von Neumann entropy of an embedding set and the entropy
//!   reduction across a projector (macro-scale compression).
//! - [`alignment`]: patch-level localization of object labels by thresholded
//!   cosine similarity, scored as mean IoU against ground-truth masks
//!   (micro-scale alignment).
//! - [`pursuit`]: greedy matching-pursuit decomposition of a vision embedding
//!   over the word-embedding dictionary (multi-semantic alignment).
//! - [`trainer`]: patch-aligned projector training with a cosine patch loss,
//!   AdamW, and a cosine learning-rate schedule.
//!
//! Supporting modules hold the shared carriers ([`matrix`], [`vocab`],
//! [`pad`]), pixel-level mask geometry ([`mask_geom`]), label tokenization
//! ([`text_embed`]), and a synthetic-data oracle ([`synth`]).
//!
//! All floating-point transcendentals go through [`libm`] so results are
//! bit-identical across platforms. The crate is `no_std`-compatible
//! (requires `alloc`); the `std` feature only adds `std::error::Error` for
//! the error type.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod alignment;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod mask_geom;
pub mod math;
pub mod matrix;
pub mod pad;
pub mod pursuit;
pub mod random;
pub mod synth;
pub mod text_embed;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, Dtype};
pub use vocab::VocabTable;
