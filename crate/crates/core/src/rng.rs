//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness (data generation, parameter init, corruption,
//! sampling) draws from its own ChaCha stream so that adding draws in one
//! place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream names used across the crate.
pub mod stream {
    pub const DATA: &str = "data";
    pub const INIT: &str = "init";
    pub const CORRUPTION: &str = "corruption";
    pub const SAMPLING: &str = "sampling";
    pub const EVAL: &str = "eval";
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic generator for `(seed, name)`.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}
