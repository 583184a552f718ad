//! Seed plumbing. Every stochastic component draws from its own named
//! stream derived from a single mission seed, so changing how often one
//! component samples never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of words into one hash, order-sensitive.
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(seed), |acc, &w| splitmix64(acc ^ w.rotate_left(17)))
}

/// Named sub-streams of a mission seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Sensor,
    Dropout,
    Transition,
    Subset,
    Maxima,
    Scenario,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Sensor => 0x5345_4e53,
            Stream::Dropout => 0x4452_4f50,
            Stream::Transition => 0x5452_414e,
            Stream::Subset => 0x5355_4253,
            Stream::Maxima => 0x4d41_5849,
            Stream::Scenario => 0x5343_454e,
        }
    }
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    hash_words(seed, &[stream.tag()])
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream))
}
