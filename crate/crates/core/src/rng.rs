//! Seed derivation and seeded generators.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] keyed by a 64-bit
//! seed. Sub-seeds are derived with [`mix64`], so item `i` of a dataset can be
//! regenerated without touching items `0..i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford "Mix13").
#[inline]
pub fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and an index.
#[inline]
pub fn mix64(master: u64, index: u64) -> u64 {
    avalanche(master ^ avalanche(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags that keep independent streams from colliding.
pub(crate) mod stream {
    pub const REFERENCE: u64 = 0x5245_4645_5245_4E43; // "REFERENC"
    pub const DATASET: u64 = 0x4441_5441_5345_5453; // "DATASETS"
    pub const INIT: u64 = 0x494E_4954_5041_5241; // "INITPARA"
    pub const SHUFFLE: u64 = 0x5348_5546_464C_4553; // "SHUFFLES"
}
