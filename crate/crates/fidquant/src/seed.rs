//! Deterministic derivation of independent RNG seeds from one master seed.

/// SplitMix64 finalizer: a bijective scramble of the input word. Distinct
/// inputs yield well-separated outputs suitable as independent RNG seeds.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for a named sub-stream of a master seed.
pub(crate) fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}
