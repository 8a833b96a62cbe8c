//! Seed derivation. Every random stream in a run is derived from the run seed
//! so that a (plan, seed) pair replays exactly.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` under `base`.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream.wrapping_mul(GOLDEN)) ^ index)
}

pub mod streams {
    pub const EPISODE: u64 = 1;
    pub const AGENT: u64 = 2;
}
