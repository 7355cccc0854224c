//! Evidential multimodal hate-speech detection over precomputed embeddings.
//!
//! Text and image embeddings are projected to a shared width, reweighted by a
//! squeeze-and-excitation gate, mixed by a diagonal state-space layer and read
//! out as non-negative class evidence. Evidence becomes a subjective-logic
//! opinion (belief per class plus an uncertainty mass), and training uses the
//! matching Dirichlet loss with an annealed KL regularizer.
//!
//! Gradients come from the small reverse-mode tape in [`ndgrad`].

pub mod cli;
pub mod dataio;
pub mod detector;
pub mod error;
pub mod exec;
pub mod harness;
pub mod ndgrad;
pub mod trust;

pub use error::{Error, Result};
pub use exec::Execution;
