//! Counter-based random streams. Every consumer derives its own stream from
//! `(seed, domain, index)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a, used to turn identifiers such as case ids into stream domains.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain));
    rng.set_stream(index);
    rng
}

pub mod domain {
    pub const WORLD: u64 = 1;
    pub const CASES: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN_CASES: u64 = 4;
    pub const ROLLOUT: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
}
