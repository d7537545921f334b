//! Fixtures shared by the benchmarks.

use rcd_core::decode::BlockDecodeState;
use rcd_core::model::{DenoiserParams, ModelDims};

/// The default model shape over the arithmetic vocabulary.
pub fn bench_model() -> DenoiserParams {
    let dims = ModelDims { vocab: 16, ..ModelDims::default() };
    DenoiserParams::init(dims, 7).expect("valid dims")
}

/// A fully masked block of `block` positions after a `prefix`-token prompt.
pub fn masked_block(prefix: usize, block: usize) -> BlockDecodeState {
    let prompt = (0..prefix as u32).map(|i| 2 + i % 10).collect();
    BlockDecodeState::new(prompt, block, 0, 0)
}
