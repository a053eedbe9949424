//! Keyed random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is a
//! hash of the master seed and a short key path (generation, label, replicate
//! index, ...). Draws therefore do not depend on evaluation order or on how
//! replicates are split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Key tags separating the independent families of streams.
pub mod tag {
    pub const VERTEX: u64 = 0x5645_5254;
    pub const WEIGHTS: u64 = 0x5745_4947;
    pub const REPLICATE: u64 = 0x5245_504c;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const LIMIT: u64 = 0x4c49_4d49;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for `seed` and the key path `key`.
pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed);
    for &k in key {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut bytes = [0u8; 32];
    let mut s = h;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stream for replicate `r` of an experiment keyed by `key`.
pub fn replicate(seed: u64, key: &[u64], r: u64) -> StreamRng {
    let mut k = Vec::with_capacity(key.len() + 2);
    k.push(tag::REPLICATE);
    k.extend_from_slice(key);
    k.push(r);
    stream(seed, &k)
}
