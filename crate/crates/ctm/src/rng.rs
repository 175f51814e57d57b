//! Deterministic, platform-independent random streams.
//!
//! One master seed fans out into independent substreams (one per tree
//! node, one per Monte Carlo trial) through a splitmix-style mixer.
//! Streams are counter-based: the k-th draw is a pure function of
//! (seed, k), so a draw can be replayed by index without replaying the
//! stream, and results cannot depend on evaluation order or threads.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SUBSTREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded stream of uniform draws with O(1) indexed access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream. Children of distinct indices and
    /// streams of distinct seeds are decorrelated by the mixer.
    pub fn substream(&self, index: u64) -> Self {
        let child = mix64(
            self.seed ^ mix64(index.wrapping_mul(GOLDEN_GAMMA) ^ SUBSTREAM_SALT),
        );
        RngStream::from_seed(child)
    }

    /// Child stream keyed by a (level, position) pair.
    pub fn node_substream(&self, level: u32, position: u32) -> Self {
        self.substream(((level as u64) << 32) | position as u64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.at_u64(self.counter)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        self.counter += 1;
        self.at_f64(self.counter)
    }

    /// The draw `next_u64` would produce as the `index`-th call
    /// (1-based) on a fresh stream.
    pub fn at_u64(&self, index: u64) -> u64 {
        mix64(self.seed.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Indexed counterpart of `next_f64`.
    pub fn at_f64(&self, index: u64) -> f64 {
        (self.at_u64(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Bias is below n / 2^64.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }
}
