//! Reproducible random streams.
//!
//! Every draw is addressed by `(master seed, stream id, draw index)`: the
//! master seed keys a ChaCha20 generator, the stream id selects an
//! independent ChaCha stream and the draw index is the generator's word
//! position. Streams never overlap, so fits over a grid can run on any
//! number of workers and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Well-known stream ids inside a single fit.
pub mod streams {
    /// DP noise `b`, drawn once per fit.
    pub const DP_NOISE: u64 = 1;
    /// Regularization noise, one stream per fit (iterations advance the position).
    pub const REGULARIZATION: u64 = 2;
    /// Regularization noise of recycle round `k` uses `RECYCLE_BASE + k`.
    pub const RECYCLE_BASE: u64 = 16;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Generator positioned at `word` 32-bit words into the stream.
    pub fn rng_at(&self, word: u128) -> ChaCha20Rng {
        let mut rng = self.rng();
        rng.set_word_pos(word);
        rng
    }
}

/// Derives a child master seed from a parent and a list of keys (SplitMix64 mixing).
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    let mut state = master;
    for &k in keys {
        state = splitmix(state ^ splitmix(k.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
