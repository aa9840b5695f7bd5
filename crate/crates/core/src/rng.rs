//! Seeded ChaCha substreams for reproducible simulation.
//!
//! Every stochastic run derives its draws from one user seed plus a
//! structured stream id. Stream separation means trial k's draws do not
//! depend on how many trials run or in what order, so runs can be sliced
//! and reproduced exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for (seed, stream). Different stream ids under the
/// same seed never share output.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id layout: 8-bit domain, 24-bit unit (anchor, tag, ...), 32-bit trial.
pub fn stream_id(domain: u8, unit: u32, trial: u32) -> u64 {
    debug_assert!(unit < (1 << 24), "unit id exceeds 24 bits");
    ((domain as u64) << 56) | ((unit as u64) << 32) | trial as u64
}
