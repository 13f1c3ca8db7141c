//! Independent random streams derived from one run seed.
//!
//! Each consumer gets its own ChaCha stream, so changing how many draws the
//! policy makes never shifts the environment's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Instance sampling: `alpha` and the action set.
    Env = 0,
    /// Per-round instrument and confounder draws.
    Rounds = 1,
    /// Reward noise of the unconfounded control.
    RewardNoise = 2,
    /// Action sampling inside the policy.
    Policy = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
