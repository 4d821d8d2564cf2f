//! Seed derivation for reproducible, order-independent RNG streams.
//!
//! Every random decision in the pipeline draws from a `ChaCha8Rng` whose seed
//! is derived from a master seed and a stream tag. Replications, days, trees,
//! and per-class arrival processes each get their own stream, so results do
//! not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the per-day substreams used by the engine and generator.
pub mod stream {
    pub const PATTERN: u64 = 1;
    pub const ARRIVALS: u64 = 2;
    pub const DEMOGRAPHICS: u64 = 3;
    pub const ROUTING: u64 = 4;
    pub const SERVICE: u64 = 5;
    pub const GAPS: u64 = 6;
}

/// Mixes a master seed with a stream tag (SplitMix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A fresh RNG for the stream `(master, tag)`.
pub fn stream_rng(master: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}
