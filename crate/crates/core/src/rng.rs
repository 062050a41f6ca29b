//! Seed derivation for reproducible, schedule-independent random streams.
//!
//! Every random consumer (an individual of a population, a replica of an
//! experiment) draws from its own ChaCha stream selected by a 64-bit label, so
//! results never depend on processing order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines two labels into one.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b).rotate_left(17))
}

/// Seed of replica `index` under a master seed.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    mix(splitmix64(master), index.wrapping_add(0x5eed))
}

/// Seed of an auxiliary, independent sample family `tag` under a master seed.
pub fn family_seed(master: u64, tag: &str) -> u64 {
    tag.bytes().fold(splitmix64(master), |h, b| mix(h, b as u64))
}

/// Factory for per-label streams of one population or experiment.
#[derive(Clone)]
pub struct Streams {
    base: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `label`.
    pub fn stream(&self, label: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(label);
        rng.set_word_pos(0);
        rng
    }
}
