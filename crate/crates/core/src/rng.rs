//! Deterministic random streams keyed by `(global seed, cell, time bin, purpose)`.
//!
//! Every stochastic step draws from its own stream so results do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different steps of the same cell apart.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    Prior = 1,
    Resample = 2,
    Advance = 3,
    Radar = 4,
    Fleet = 5,
    Wiper = 6,
    Evaluate = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a list of keys into a single 64-bit stream seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn stream(seed: u64, purpose: Purpose, keys: &[u64]) -> StreamRng {
    let mut all = Vec::with_capacity(keys.len() + 1);
    all.push(purpose as u64);
    all.extend_from_slice(keys);
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &all))
}

/// Signed time-bin index folded into a key.
pub fn bin_key(bin_index: i64) -> u64 {
    bin_index as u64
}
