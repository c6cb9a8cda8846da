//! Deterministic RNG stream derivation.
//!
//! Every randomized operation takes a master seed and derives independent
//! sub-streams from it, so outputs are reproducible regardless of thread
//! count and unaffected by how much randomness sibling stages consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive an independent seed for `stream` from a master seed (SplitMix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha8 generator for the given (master, stream) pair.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
