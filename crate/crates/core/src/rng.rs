//! Seed derivation shared by every randomized routine.
//!
//! Episode `k` of a run with seed `s` draws from a ChaCha8 stream keyed by
//! `s` (expanded with `seed_from_u64`) and selected with `set_stream(k)`.
//! Results therefore do not depend on how episodes are split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}
