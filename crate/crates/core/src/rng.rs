use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for one named stream of a seeded computation.
///
/// Every stochastic step draws from its own `(seed, domain, index)` stream so
/// results do not depend on evaluation order or thread scheduling.
pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) mod domain {
    pub const THRESHOLD_NOISE: u64 = 1;
    pub const FRAME_NOISE: u64 = 2;
    pub const EVENT_TIMES: u64 = 3;
    pub const SCHEDULE: u64 = 4;
    pub const TEXTURE: u64 = 5;
    pub const ANNEAL: u64 = 6;
    pub const TAU_DRAW: u64 = 7;
    pub const MASKS: u64 = 8;
    pub const STREAM_NOISE: u64 = 9;
    pub const SUITE: u64 = 10;
}
