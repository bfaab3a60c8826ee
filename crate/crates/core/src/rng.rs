//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] built from an
//! [`RngSeed`]. Independent streams (per epoch, per trial, per split) are
//! obtained with [`RngSeed::derive`], which mixes the parent seed and a
//! stream label through SplitMix64. Results are bit-reproducible for a given
//! build.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Child seed for an independent stream.
    pub fn derive(self, stream: u64) -> RngSeed {
        let mixed = splitmix64(self.0 ^ splitmix64(stream.wrapping_add(0x6a09_e667_f3bc_c909)));
        RngSeed(mixed)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
