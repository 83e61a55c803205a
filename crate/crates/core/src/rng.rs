//! Seeded random streams.
//!
//! Every generator is a ChaCha8 stream keyed by a 64-bit seed. Independent
//! sub-streams of one seed are selected with the ChaCha stream id, so the
//! design draw and the noise draw of a replication never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id used for design matrix generation.
pub const DESIGN_STREAM: u64 = 0;
/// Stream id used for response noise.
pub const NOISE_STREAM: u64 = 1;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed of replication `rep` derived from a study seed.
///
/// Replications depend only on their own index, so they can be run in any
/// order or in parallel.
#[inline]
pub fn rep_seed(seed: u64, rep: u64) -> u64 {
    seed ^ rep
}
