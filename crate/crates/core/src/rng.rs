//! Seeded random streams.
//!
//! Every stochastic draw in a run comes from a ChaCha8 stream whose seed is
//! derived from the run seed plus a purpose tag and indices, so that batches
//! and decisions are reproducible independently of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of words into a new 64-bit seed.
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix(seed), |acc, &w| splitmix(acc ^ splitmix(w)))
}

pub fn stream(seed: u64, words: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, words))
}
