//! Deterministic random streams.
//!
//! Every stochastic unit of work (one image in an E-step, one example of the
//! toy generator, one probe fit) draws from its own ChaCha stream whose seed
//! is a hash of the global seed and the work item's coordinates. Results are
//! therefore independent of how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a global seed with a path of stream coordinates.
pub fn stream_seed(seed: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, coords: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, coords))
}

// Stream domains, used as the first coordinate so different subsystems never
// share a stream.
pub const DOMAIN_INIT: u64 = 1;
pub const DOMAIN_ESTEP: u64 = 2;
pub const DOMAIN_MSTEP: u64 = 3;
pub const DOMAIN_SHUFFLE: u64 = 4;
pub const DOMAIN_SEGMENT: u64 = 5;
pub const DOMAIN_TOY: u64 = 6;
pub const DOMAIN_PATCH: u64 = 7;
pub const DOMAIN_PROBE: u64 = 8;
pub const DOMAIN_CHAINS: u64 = 9;
pub const DOMAIN_SAMPLE: u64 = 10;
