//! Counter-based deterministic random numbers.
//!
//! Sampling must be a pure function of `(seed, draw index)` so that replicate
//! loops can be parallelised without changing results. We use a SplitMix64-style
//! finalizer as the mixing function; draw `i` of stream `seed` depends only on
//! those two words, never on generator state.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stafford "mix13" finalizer (the SplitMix64 output function).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` keyed by `(seed, index)`.
#[inline]
pub fn uniform_u01(seed: u64, index: u64) -> f64 {
    let word = mix64(mix64(seed) ^ index.wrapping_mul(GOLDEN_GAMMA));
    // 53 high bits -> [0,1)
    (word >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Derive an independent stream seed, e.g. one per Monte-Carlo replicate.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_mul(0xD605_BBB5_8C8E_C2C5))
}
