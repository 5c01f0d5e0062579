//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! base seed, a sample index and a purpose, so results never depend on the
//! order in which samples are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for; keeps streams for the same sample
/// independent of one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Phantom = 1,
    Mask = 2,
    Motion = 3,
    Noise = 4,
    Init = 5,
    Shuffle = 6,
    Split = 7,
}

/// Generator for `(seed, index, purpose)`; the per-sample key is `seed ^ index`.
pub fn stream_rng(seed: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index);
    rng.set_stream(stream as u64);
    rng
}
