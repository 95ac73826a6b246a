//! Seeded, portable random streams.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`.
//! Independent consumers select distinct 64-bit stream ids, so results are
//! reproducible across platforms and independent of scheduling:
//!
//! | stream                | consumer                              |
//! |-----------------------|---------------------------------------|
//! | [`NOMINAL_STREAM`]    | nominal-model estimation / random MDP |
//! | `SCENARIO_STREAM_BASE + w` | noise for scenario `w`           |
//! | `w`                   | cohort simulation of scenario `w`     |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NOMINAL_STREAM: u64 = u64::MAX;
pub const SCENARIO_STREAM_BASE: u64 = 1 << 32;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
