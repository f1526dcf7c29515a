//! Deterministic counter-based RNG streams.
//!
//! Every stochastic component draws from a ChaCha stream derived from
//! (seed, indices), so results never depend on evaluation order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse a seed plus integer coordinates into one 64-bit key.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x2545_f491_4f6c_dd1d_u64;
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

/// Independent deterministic stream for (seed, coordinates).
pub(crate) fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix(parts));
    rng
}
