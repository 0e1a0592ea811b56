//! Counter-based random streams.
//!
//! Every stochastic routine draws from an [`RngStream`] addressed by
//! `(seed, stream id)`. The generator is ChaCha8: its output is a pure
//! function of (key, stream, block counter), so a given draw index yields the
//! same bits on every platform and independent streams never need to be
//! coordinated across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids at or above this value are reserved for internal auxiliary
/// draws (pair sampling, initial states) so they never collide with replica ids.
pub const AUX_STREAM_BASE: u64 = 1 << 48;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// A stream positioned at 32-bit word `word_pos`.
    pub fn at(seed: u64, stream: u64, word_pos: u128) -> Self {
        let mut rng = Self::new(seed, stream);
        rng.inner.set_word_pos(word_pos);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// A fresh stream sharing this seed.
    pub fn sibling(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
