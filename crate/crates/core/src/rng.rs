//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by
//! `(master seed, domain, index)`. Streams for different indices are
//! independent ChaCha8 streams of the same key, so work can be split across
//! threads in any order and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept distinct so that e.g. shot 3 and round 3 never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Shot = 1,
    Jitter = 2,
    Reference = 3,
    Cycle = 4,
    Round = 5,
    Calibration = 6,
    Payload = 7,
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. a per-cycle master seed from a run seed.
pub fn derive_seed(master: u64, domain: Domain, index: u64) -> u64 {
    mix64(master ^ mix64((domain as u64) << 56 ^ index))
}

/// The random stream for `index` within `domain`.
pub fn stream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(mix64((domain as u64) << 56 ^ index));
    rng
}
