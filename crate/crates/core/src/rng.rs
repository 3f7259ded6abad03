//! Counter-based random number streams.
//!
//! Every sampled object (a path, a drift process, a transform sequence) owns
//! its own ChaCha stream addressed by `(master_seed, stream)`. Streams are
//! statistically independent, cheap to construct, and independent of
//! scheduling, so an ensemble mapped over paths in parallel reproduces the
//! sequential run bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns the RNG for stream `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Splits a stream index into a per-path channel, keeping channels of the
/// same path adjacent but disjoint across paths.
pub fn path_stream(path_index: usize, channel: u64, channels: u64) -> u64 {
    debug_assert!(channel < channels);
    (path_index as u64) * channels + channel
}
