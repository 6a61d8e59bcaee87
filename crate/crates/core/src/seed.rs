//! Seed derivation.
//!
//! Every random draw in the crate goes through a `ChaCha8Rng` seeded from a
//! 64-bit value. Per-sample seeds are derived from `(master, index, stream)`
//! with the SplitMix64 finalizer so that samples can be generated in any order
//! (or in parallel) and still produce identical bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Shape = 1,
    Pose = 2,
    Asperity = 3,
    Noise = 4,
    Split = 5,
}

/// Seed of `stream` for sample `index` under `master`.
pub fn derive(master: u64, index: u64, stream: Stream) -> u64 {
    let sample = splitmix64(master ^ splitmix64(index));
    splitmix64(sample.wrapping_add((stream as u64).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
