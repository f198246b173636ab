//! Keyed random substreams.
//!
//! Every random draw in a run comes from a SplitMix64 generator whose seed is
//! derived from `(master seed, stream label, index tuple)`. The derivation is
//! the SplitMix64 finalizer folded over the tuple, so a draw depends only on
//! its key and never on the order in which other draws were made.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream labels. The discriminants are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 1,
    Init = 2,
    AttackLinks = 3,
    AttackValues = 4,
    Partition = 5,
    Byzantine = 6,
    Connectivity = 7,
    TieBreak = 8,
    Data = 9,
    NodeOrder = 10,
}

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the 64-bit key for a labelled substream.
pub fn derive_key(seed: u64, label: Stream, indices: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(label as u64)));
    for &i in indices {
        h = mix64(h ^ i.wrapping_mul(GOLDEN_GAMMA).wrapping_add(GOLDEN_GAMMA));
    }
    h
}

/// Generator for the substream keyed by `(seed, label, indices)`.
pub fn substream(seed: u64, label: Stream, indices: &[u64]) -> SplitMix64 {
    SplitMix64::seed_from_u64(derive_key(seed, label, indices))
}
