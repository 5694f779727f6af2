//! Deterministic seed derivation.
//!
//! All randomness in this crate flows through `ChaCha8Rng` seeded with values
//! derived here, so a run is reproducible from a single root seed regardless
//! of problem order or worker scheduling.

/// SplitMix64 finalizer. Decorrelates nearby integer inputs.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a base seed and an integer tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

/// Derive a child seed from a base seed and a string tag (FNV-1a over bytes).
pub fn mix_str(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(seed, h)
}

/// Derive a child seed from a base seed and a tree path of child indices.
pub fn mix_path(seed: u64, path: &[usize]) -> u64 {
    let mut s = mix(seed, path.len() as u64);
    for &idx in path {
        s = mix(s, idx as u64 + 1);
    }
    s
}
