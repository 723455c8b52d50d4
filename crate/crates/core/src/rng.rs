//! Seed derivation.
//!
//! Every random decision in the crate draws from a `ChaCha8Rng` whose seed is
//! derived from a root seed plus a path of integer labels. Two different paths
//! give statistically independent substreams, and a path never depends on how
//! many other substreams exist, so e.g. adding a class to a stream leaves the
//! draws of the existing classes untouched.
//!
//! Derivation: `h = splitmix64(root)`, then for every label
//! `h = splitmix64(h ^ splitmix64(label))`. The resulting 64-bit value seeds
//! `ChaCha8Rng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain labels so substreams of different subsystems never collide.
pub mod domain {
    pub const FIRST_OCCURRENCE: u64 = 0x01;
    pub const REPETITION: u64 = 0x02;
    pub const FIXUP: u64 = 0x03;
    pub const SAMPLES: u64 = 0x04;
    pub const ZIPF_RANDOM: u64 = 0x05;
    pub const DATASET: u64 = 0x10;
    pub const INIT: u64 = 0x20;
    pub const SHUFFLE: u64 = 0x21;
    pub const AUGMENT: u64 = 0x22;
    pub const MINING: u64 = 0x23;
    pub const TTA: u64 = 0x24;
    pub const PROJECTION: u64 = 0x25;
    pub const REPLAY: u64 = 0x26;
    pub const STREAM: u64 = 0x30;
    pub const STRATEGY: u64 = 0x31;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from `root` and a label path.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |h, &label| splitmix64(h ^ splitmix64(label)))
}

/// A generator for the substream identified by `path`.
pub fn substream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
