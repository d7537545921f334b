//! Residual context diffusion for masked diffusion language models.
//!
//! A block-wise masked denoiser normally throws away the predictive
//! distribution of every position it declines to commit. This crate keeps
//! those distributions as soft-token residuals, weights them by normalized
//! entropy and blends them into the next step's mask embeddings.
//!
//! Modules:
//! - [`prob`]: distribution kernels (softmax, entropy weight, residual, blend)
//! - [`model`]: toy transformer denoiser with manual backprop and checkpoints
//! - [`train`]: corruption, masked cross-entropy, reference/target training
//! - [`decode`]: sequential and residual block decoding loops
//! - [`eval`]: recall, Pareto sweeps, Markov posterior oracle, reports
//! - [`data`]: tokenizer, synthetic corpora, dataset files

pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod prob;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{RcdError, Result};
pub use model::{AttentionScheme, DenoiserParams, ModelDims, Slot};
pub use prob::{EmbeddingCodebook, Logits, ResidualState, VocabDistribution};
