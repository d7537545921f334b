//! Block-wise iterative denoising.
//!
//! Two loops share selection and commit logic. The sequential loop resets
//! every uncommitted position to the plain mask embedding after each step;
//! the residual loop instead feeds each still-masked position a blend of the
//! mask embedding and the soft token implied by its previous prediction.

mod audit;
mod config;
mod engine;
mod trace;

pub use audit::audit_step;
pub use config::{AlphaStrategy, DecodeConfig, DecodeMode, Selection, WarmStart};
pub use engine::{
    block_logits, compute_alpha, decode_sequence, decode_step_rcd, decode_step_seqd, warm_start,
    BlockDecodeState, Decoded,
};
pub use trace::{read_trace, write_trace, PositionTop, StepRecord, TOP_WIDTH};
