//! Counter-based random streams.
//!
//! Every stochastic routine draws from a ChaCha8 generator keyed by a
//! `(seed, stream_id)` pair. ChaCha exposes a 64-bit stream selector next to
//! the 256-bit key, so independent trials never share state and can run on
//! any worker in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator handed to sampling routines.
pub type StreamRng = ChaCha8Rng;

/// Identifies one reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream for a named role inside one trial (sender, channel,
    /// receiver, ...). Children of distinct tags never collide with each other
    /// or with the parent's sibling streams.
    pub fn substream(&self, tag: u64) -> RngStream {
        let seed = splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5bd1_e995)));
        let stream_id = splitmix64(self.stream_id ^ splitmix64(tag));
        RngStream { seed, stream_id }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
