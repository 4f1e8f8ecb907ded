//! Seed derivation helpers.
//!
//! Every randomized stage of the harness derives its RNG seed from the
//! campaign's global seed plus fixed stream tags, so runs are reproducible
//! and individual cases can be replayed in isolation.

/// SplitMix64 finalizer. Good enough to decorrelate derived seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream tag.
pub fn mix2(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derives a child seed from a parent seed and two stream tags.
pub fn mix3(seed: u64, tag_a: u64, tag_b: u64) -> u64 {
    mix2(mix2(seed, tag_a), tag_b)
}

/// FNV-1a over a byte slice; used for content-keyed tie-breaking
/// (e.g. scene-dependent exploration order), never for security.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
