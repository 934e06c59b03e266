//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit generator. Per-item streams
//! are derived from `(seed, index)` through the ChaCha stream counter, so
//! parallel or reordered work never changes the draws of any single item.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AugmentRng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for item `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
