//! Cross-speaker emotion transfer TTS at desk scale.
//!
//! The crate trains a sequence-to-sequence acoustic model whose emotion
//! conditioning is produced by an emotion disentangling module (EDM): an
//! emotion encoder constrained to be orthogonal to a speaker encoder that is
//! itself trained adversarially (via gradient reversal) to forget emotion.
//! Everything runs on a synthetic corpus with known latent factors so that
//! disentanglement, speaker leakage, and emotion strength control can be
//! measured objectively instead of with human raters.
//!
//! Module map:
//! - [`corpus`] — synthetic corpus generation, manifests, batching
//! - [`backbone`] — text encoder (pre-net + CBHG), GMM attention, decoder
//! - [`edm`] — the emotion disentangling module and its losses
//! - [`trainer`] — the composite objective, optimization, checkpoints
//! - [`inference`] — synthesis and embedding extraction
//! - [`evalkit`] — probes, leakage cosine, projections, strength ranking
//! - [`cli`] — the `emodis` command-line entry point

pub mod backbone;
pub mod cli;
pub mod corpus;
pub mod det;
pub mod edm;
pub mod error;
pub mod evalkit;
pub mod inference;
pub mod mel;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
pub use mel::MelSpectrogram;
