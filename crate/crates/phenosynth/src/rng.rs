//! Stable seed derivation for the many independently seeded stages.

/// Derives a child seed from a base seed and a stream of tag words.
///
/// Uses splitmix64 so derived seeds are stable across platforms and releases;
/// hashing with the std hasher would not give that guarantee.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &part in parts {
        state = splitmix64(state.wrapping_add(part));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
