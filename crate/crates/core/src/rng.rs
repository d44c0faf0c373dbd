//! Named random sub-streams derived from one user seed.
//!
//! Every consumer of randomness (scenario generation, measurement noise,
//! annealing, random baselines) gets its own ChaCha stream keyed by a stream
//! tag and a tuple of indices, so results do not depend on evaluation order
//! or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Scenario,
    Truth,
    Noise,
    Anneal,
    RandomAlloc,
    Verify,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Scenario => 0x5ce7_a410,
            Stream::Truth => 0x7e07_4a11,
            Stream::Noise => 0x0015_e000,
            Stream::Anneal => 0xa22e_a1e0,
            Stream::RandomAlloc => 0x4a2d_0a11,
            Stream::Verify => 0x7e21_f1ed,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a 64-bit seed for `stream` at the given index path.
pub fn derive_seed(seed: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream.tag()));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, stream: Stream, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, path))
}
