//! Parallel Monte Carlo over independent episode streams.
//!
//! Episodes are split into fixed-size chunks; each chunk draws from the
//! streams of its own episode indices and the integer accumulators are
//! merged, so results do not depend on the thread count.

use orthwalk_core::stationary::{return_time_mc_range, McAccumulator, McSummary};
use orthwalk_core::{Result, TransitionKernel, WalkState};
use rayon::prelude::*;

const CHUNK: u64 = 4096;

pub fn return_time_mc_accumulate(
    kernel: &TransitionKernel,
    target: &WalkState,
    episodes: u64,
    seed: u64,
    max_steps: u64,
) -> Result<McAccumulator> {
    let chunks: Vec<(u64, u64)> =
        (0..episodes.div_ceil(CHUNK)).map(|c| (c * CHUNK, CHUNK.min(episodes - c * CHUNK))).collect();
    let parts: Vec<McAccumulator> = chunks
        .par_iter()
        .map(|&(first, count)| return_time_mc_range(kernel, target, seed, first, count, max_steps))
        .collect::<Result<_>>()?;
    let mut acc = McAccumulator::default();
    for part in parts {
        acc.merge(part);
    }
    Ok(acc)
}

pub fn return_time_mc(kernel: &TransitionKernel, target: &WalkState, episodes: u64, seed: u64, max_steps: u64) -> Result<McSummary> {
    Ok(return_time_mc_accumulate(kernel, target, episodes, seed, max_steps)?.summary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthwalk_core::machine::samples;
    use orthwalk_core::rational::ratio;
    use orthwalk_core::reduction::compile_extended;
    use orthwalk_core::stationary;

    #[test]
    fn parallel_equals_sequential() {
        let walk = compile_extended(&samples::halt_in_two(), &ratio(1, 2), false, None).unwrap();
        let par = return_time_mc(&walk.kernel, &walk.origin(), 10_000, 5, 100).unwrap();
        let seq = stationary::return_time_mc(&walk.kernel, &walk.origin(), 10_000, 5, 100).unwrap();
        assert_eq!(par, seq);
    }
}
