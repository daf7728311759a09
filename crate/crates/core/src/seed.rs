//! Seed splitting: one global seed fans out to independent component streams.
//!
//! `derive(seed, stream, index)` hashes the stream name with 64-bit FNV-1a,
//! xors it into the seed together with a SplitMix64 scramble of the index, and
//! finishes with another SplitMix64 round. Identical arguments always yield
//! identical seeds, so any component can be rerun on its own.

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix64(seed ^ fnv1a(stream) ^ splitmix64(index))
}
