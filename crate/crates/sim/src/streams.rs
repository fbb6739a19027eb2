//! Independent random streams derived from the scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LAYOUT: u64 = 1;
pub const CHANNEL: u64 = 2;
pub const SORTING: u64 = 3;
pub const CITIZENS: u64 = 4;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream)
}

pub fn rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed(master, stream))
}

/// The stream for one citizen on one day. Keyed rather than sequential, so a
/// citizen's draws do not depend on what anyone else did, which is what makes
/// runs that differ only in preset paired.
pub fn citizen_day(master: u64, citizen: u64, day: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed(master, CITIZENS) ^ mix(citizen) ^ mix(day).rotate_left(17)))
}
