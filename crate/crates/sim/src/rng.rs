//! Deterministic derivation of independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Generator for the stream named by `tags` under `seed`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

// stream labels
pub(crate) const HOME_WORK: u64 = 1;
pub(crate) const JITTER: u64 = 2;
pub(crate) const ERRAND_COUNT: u64 = 3;
pub(crate) const ERRAND_DEST: u64 = 4;
pub(crate) const AGENT: u64 = 5;
pub(crate) const PHASE: u64 = 6;
pub(crate) const PLACEMENT: u64 = 7;
pub(crate) const REPLICATION: u64 = 8;
