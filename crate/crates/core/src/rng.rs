//! Counter-based deterministic randomness.
//!
//! A [`RngState`] never hands out a shared mutable generator. Instead every
//! consumer asks for the substream keyed by `(iteration, index)`, so the i-th
//! perturbation of iteration t is the same no matter which thread draws it or
//! in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Bits of ChaCha word position reserved per substream index.
const INDEX_SHIFT: u32 = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Domain-separation counter; distinct streams of the same seed never overlap.
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Derives an independent child state, e.g. one per benchmark trial.
    pub fn fork(&self, stream: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(stream.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Generator for the `index`-th draw of `iteration`. Valid for
    /// `index < 2^32`; each substream provides 2^36 words.
    pub fn substream(&self, iteration: u64, index: u64) -> ChaCha8Rng {
        debug_assert!(index < (1 << 32));
        let key = splitmix64(self.seed) ^ splitmix64(self.stream.rotate_left(17) ^ 0x9e37_79b9);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(iteration);
        rng.set_word_pos(u128::from(index) << INDEX_SHIFT);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
