//! Seeded random streams.
//!
//! Every consumer of randomness asks for its own stream, identified by a
//! `(seed, purpose tag, index)` triple. A stream is a SplitMix64 generator
//! (64-bit counter, Weyl increment, xor-shift-multiply finalizer) whose
//! starting state is a hash of that triple, so no two purposes share draws
//! and nothing depends on global RNG state or on call order elsewhere.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
pub use rand_xoshiro::SplitMix64;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Folds an ordered list of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    })
}

pub fn stream(seed: u64, tag: &str, index: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(derive_seed(&[seed, fnv1a(tag.as_bytes()), index]))
}

pub(crate) fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub(crate) fn normal(rng: &mut SplitMix64, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}
