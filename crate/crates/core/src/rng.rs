//! Seeded random streams. Every stochastic step derives its own stream from
//! the run seed plus a tag, so results do not depend on call order or on
//! how work is spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn derive_seed(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ fnv1a(tag));
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

/// Stream keyed by a string (usually a clip id) plus numeric parts.
pub fn keyed(seed: u64, tag: &str, key: &str, parts: &[u64]) -> Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(fnv1a(key));
    all.extend_from_slice(parts);
    Rng::seed_from_u64(derive_seed(seed, tag, &all))
}

pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tag, parts))
}
