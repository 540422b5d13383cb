//! Seed splitting.
//!
//! Every random stream is derived from one master seed:
//! `stream_seed(master, purpose, index) = splitmix64(splitmix64(master ^ fnv1a64(purpose)) ^ index)`,
//! and the resulting 64-bit value seeds a `ChaCha8Rng`. Distinct purposes
//! ("data", "init", "negatives", "mc", ...) and indices give independent streams,
//! so results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn stream_seed(master: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a64(purpose)) ^ index)
}

pub fn stream(master: u64, purpose: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, purpose, index))
}
