//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed plus a tuple of
//! tags (replica index, fold, tree, ...). Streams never depend on the order in
//! which work is scheduled, so parallel and sequential runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Distinct tag sequences give unrelated seeds.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(GOLDEN)));
    }
    h
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tags))
}

/// Stable 64-bit FNV-1a hash, used to turn string ids into stream tags.
pub fn str_tag(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A uniform draw in [0, 1) that depends only on `(seed, tags)`.
pub fn uniform(seed: u64, tags: &[u64]) -> f64 {
    (derive_seed(seed, tags) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
