//! Deterministic random number streams for parallel Monte Carlo.
//!
//! Every path (or other unit of parallel work) gets its own ChaCha8 stream,
//! identified by `(seed, stream_id)`. Streams never overlap, so results do
//! not depend on thread scheduling: path `i` sees the same draws whether the
//! simulation runs on one thread or sixteen.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for one unit of work (`stream_id` is typically a path index).
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Derives a child seed for a named sub-experiment (e.g. one model index in
/// a sequence) so that nested simulations stay independent.
pub fn derive(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over seed xor golden-ratio multiple of the tag.
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
