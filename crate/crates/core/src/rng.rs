//! Seeded random streams.
//!
//! Every random draw in the crate goes through xoshiro256++ seeded with
//! SplitMix64 expansion of a 64-bit seed (`Xoshiro256PlusPlus::seed_from_u64`).
//! Normal variates use `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent stream derived from `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    // SplitMix64 finalizer decorrelates nearby stream ids.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    Xoshiro256PlusPlus::seed_from_u64(z)
}
