//! Single-station multiclass queue in slotted time.
//!
//! Type `i` parts arrive at times `mM` with probability `p_i` and visit the
//! station `J_i` times, passing through buffers `B_{i,1}..B_{i,J_i}`. Each unit
//! of time the server works on buffer `u(b)`, where `b` is the occupancy
//! bit-vector, or idles when `u(b) = 0`. Arrivals at `mM` are realized before
//! the service decision at `mM`.
//!
//! Buffers are numbered `1..=n` in the order `(1,1)..(1,J_1), (2,1)..`; bit
//! `k-1` of `b` is set when buffer `k` is nonempty.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::{One, Zero};
use rand::RngCore;

use crate::chain::MarkovChain;
use crate::rational::{self, Prob};
use crate::rng::episode_rng;
use crate::{Error, Result};

/// Largest buffer count with a tabulated policy.
pub const MAX_BUFFERS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueSystem {
    visits: Vec<u32>,
    slot: u32,
    arrival_probs: Vec<Prob>,
    starts: Vec<usize>,
}

impl QueueSystem {
    pub fn new(visits: Vec<u32>, slot: u32, arrival_probs: Vec<Prob>) -> Result<QueueSystem> {
        if slot == 0 {
            return Err(Error::Parameter("slot length M must be at least 1".into()));
        }
        if visits.is_empty() || visits.len() != arrival_probs.len() {
            return Err(Error::Parameter("need one visit count and one arrival probability per type".into()));
        }
        if visits.contains(&0) {
            return Err(Error::Parameter("every type must visit the station at least once".into()));
        }
        if let Some(p) = arrival_probs.iter().find(|p| !rational::is_probability(p)) {
            return Err(Error::Probability(p.clone()));
        }
        let mut starts = Vec::with_capacity(visits.len());
        let mut n = 0usize;
        for &j in &visits {
            starts.push(n);
            n += j as usize;
        }
        if n > MAX_BUFFERS {
            return Err(Error::Parameter(alloc::format!("{n} buffers exceed the limit of {MAX_BUFFERS}")));
        }
        Ok(QueueSystem { visits, slot, arrival_probs, starts })
    }

    pub fn types(&self) -> usize {
        self.visits.len()
    }

    pub fn visits(&self) -> &[u32] {
        &self.visits
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn arrival_probs(&self) -> &[Prob] {
        &self.arrival_probs
    }

    pub fn buffers(&self) -> usize {
        self.visits.iter().map(|&j| j as usize).sum()
    }

    /// 1-based buffer number of `B_{i,j}` (both 1-based).
    pub fn buffer(&self, i: usize, j: usize) -> usize {
        self.starts[i - 1] + j
    }

    /// `(i, j)` of a 1-based buffer number.
    pub fn buffer_label(&self, k: usize) -> (usize, usize) {
        let i = self.starts.iter().rposition(|&s| s < k).unwrap_or(0);
        (i + 1, k - self.starts[i])
    }

    /// Arrival rate `λ_i = p_i / M`.
    pub fn rate(&self, i: usize) -> Prob {
        &self.arrival_probs[i - 1] / rational::int(i64::from(self.slot))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadFactor {
    pub rho: Prob,
    /// `ρ < 1`, necessary for stability.
    pub stable_necessary: bool,
}

/// `ρ = Σ_i J_i λ_i`.
pub fn load_factor(system: &QueueSystem) -> LoadFactor {
    let rho: Prob = (1..=system.types()).map(|i| rational::int(i64::from(system.visits[i - 1])) * system.rate(i)).sum();
    let stable_necessary = rho < Prob::one();
    LoadFactor { rho, stable_necessary }
}

/// Generalized priority policy `u: {0,1}^n → {0..n}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityPolicy {
    table: Vec<usize>,
    order: Option<Vec<usize>>,
}

impl PriorityPolicy {
    /// Policy from its full table, indexed by occupancy bits.
    pub fn from_table(system: &QueueSystem, table: Vec<usize>) -> Result<PriorityPolicy> {
        let n = system.buffers();
        if table.len() != 1 << n {
            return Err(Error::Parameter(alloc::format!("policy table needs {} entries, found {}", 1usize << n, table.len())));
        }
        for (bits, &k) in table.iter().enumerate() {
            if k > n || (k > 0 && bits & (1 << (k - 1)) == 0) {
                return Err(Error::InconsistentPolicy { bits: bits as u64, buffer: k });
            }
        }
        Ok(PriorityPolicy { table, order: None })
    }

    /// Classical priority: serve the first nonempty buffer of `order`
    /// (1-based buffer numbers, highest priority first).
    pub fn from_order(system: &QueueSystem, order: Vec<usize>) -> Result<PriorityPolicy> {
        let n = system.buffers();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (1..=n).collect::<Vec<_>>() {
            return Err(Error::Parameter("priority order must be a permutation of the buffers".into()));
        }
        let table = (0..1usize << n).map(|bits| order.iter().copied().find(|&k| bits & (1 << (k - 1)) != 0).unwrap_or(0)).collect();
        Ok(PriorityPolicy { table, order: Some(order) })
    }

    /// Never serves.
    pub fn idling(system: &QueueSystem) -> PriorityPolicy {
        PriorityPolicy { table: alloc::vec![0; 1 << system.buffers()], order: None }
    }

    pub fn serve(&self, bits: usize) -> usize {
        self.table[bits]
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueueState {
    pub buffers: Vec<u64>,
    /// Offset within the current slot block, in `0..M`.
    pub phase: u32,
}

impl QueueState {
    pub fn empty(system: &QueueSystem) -> QueueState {
        QueueState { buffers: alloc::vec![0; system.buffers()], phase: 0 }
    }

    pub fn bits(&self) -> usize {
        self.buffers.iter().enumerate().filter(|(_, &x)| x > 0).fold(0, |b, (k, _)| b | 1 << k)
    }

    pub fn total(&self) -> u64 {
        self.buffers.iter().sum()
    }
}

fn add_arrivals(system: &QueueSystem, buffers: &mut [u64], arrivals: &[bool]) {
    for (i, _) in arrivals.iter().enumerate().filter(|(_, &a)| a) {
        buffers[system.starts[i]] += 1;
    }
}

/// One service at `u(b)`; returns the served buffer (0 when idle).
fn serve_once(system: &QueueSystem, policy: &PriorityPolicy, buffers: &mut [u64]) -> Result<usize> {
    let bits = buffers.iter().enumerate().filter(|(_, &x)| x > 0).fold(0usize, |b, (k, _)| b | 1 << k);
    let k = policy.serve(bits);
    if k > 0 {
        if buffers[k - 1] == 0 {
            return Err(Error::InconsistentPolicy { bits: bits as u64, buffer: k });
        }
        buffers[k - 1] -= 1;
        let (i, j) = system.buffer_label(k);
        if j < system.visits[i - 1] as usize {
            buffers[k] += 1;
        }
    }
    Ok(k)
}

/// One unit of time. `arrivals[i]` is used only at phase 0.
pub fn queue_step(system: &QueueSystem, policy: &PriorityPolicy, state: &QueueState, arrivals: &[bool]) -> Result<QueueState> {
    if state.buffers.len() != system.buffers() {
        return Err(Error::DimensionMismatch { expected: system.buffers(), found: state.buffers.len() });
    }
    let mut next = state.clone();
    if state.phase == 0 {
        if arrivals.len() != system.types() {
            return Err(Error::DimensionMismatch { expected: system.types(), found: arrivals.len() });
        }
        add_arrivals(system, &mut next.buffers, arrivals);
    }
    serve_once(system, policy, &mut next.buffers)?;
    next.phase = (state.phase + 1) % system.slot;
    Ok(next)
}

/// The queue observed at times `mM`, before arrivals.
#[derive(Clone, Debug)]
pub struct EmbeddedChain<'a> {
    pub system: &'a QueueSystem,
    pub policy: &'a PriorityPolicy,
}

pub fn embedded_chain<'a>(system: &'a QueueSystem, policy: &'a PriorityPolicy) -> EmbeddedChain<'a> {
    EmbeddedChain { system, policy }
}

impl EmbeddedChain<'_> {
    /// Arrival patterns with positive probability.
    pub fn arrival_outcomes(&self) -> Vec<(Vec<bool>, Prob)> {
        let types = self.system.types();
        (0..1u64 << types)
            .filter_map(|mask| {
                let arrivals: Vec<bool> = (0..types).map(|i| mask & (1 << i) != 0).collect();
                let prob: Prob = arrivals
                    .iter()
                    .zip(&self.system.arrival_probs)
                    .map(|(&a, p)| if a { p.clone() } else { Prob::one() - p })
                    .product();
                (!prob.is_zero()).then_some((arrivals, prob))
            })
            .collect()
    }

    /// Buffer contents after each of the `M` unit times of a block, measured
    /// just before each service.
    pub fn block(&self, start: &[u64], arrivals: &[bool]) -> Result<(Vec<Vec<u64>>, Vec<u64>)> {
        let mut buffers = start.to_vec();
        add_arrivals(self.system, &mut buffers, arrivals);
        let mut seen = Vec::with_capacity(self.system.slot as usize);
        for _ in 0..self.system.slot {
            seen.push(buffers.clone());
            serve_once(self.system, self.policy, &mut buffers)?;
        }
        Ok((seen, buffers))
    }

    /// Exact time-average buffer contents (measured before each service)
    /// under the epoch law `pi`.
    pub fn occupancy_means(&self, pi: &BTreeMap<Vec<u64>, Prob>) -> Result<Vec<Prob>> {
        let n = self.system.buffers();
        let mut sums = alloc::vec![Prob::zero(); n];
        let outcomes = self.arrival_outcomes();
        for (state, mass) in pi {
            for (arrivals, p) in &outcomes {
                let (seen, _) = self.block(state, arrivals)?;
                let w = mass * p;
                for b in &seen {
                    for (s, &x) in sums.iter_mut().zip(b) {
                        *s += &w * rational::int(x as i64);
                    }
                }
            }
        }
        let m = rational::int(i64::from(self.system.slot));
        Ok(sums.into_iter().map(|s| s / &m).collect())
    }
}

impl MarkovChain for EmbeddedChain<'_> {
    type State = Vec<u64>;

    fn successors(&self, state: &Vec<u64>) -> Result<Vec<(Vec<u64>, Prob)>> {
        if state.len() != self.system.buffers() {
            return Err(Error::DimensionMismatch { expected: self.system.buffers(), found: state.len() });
        }
        let mut out: BTreeMap<Vec<u64>, Prob> = BTreeMap::new();
        for (arrivals, p) in self.arrival_outcomes() {
            let (_, end) = self.block(state, &arrivals)?;
            *out.entry(end).or_insert_with(Prob::zero) += p;
        }
        Ok(out.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueStats {
    pub epochs: u64,
    /// Time-average content of each buffer, measured before each service.
    pub mean_occupancy: Vec<f64>,
    /// Standard error of the total mean occupancy, treating blocks as
    /// independent.
    pub occupancy_std_error: f64,
    /// Fraction of epochs `mM` with an empty system before arrivals.
    pub empty_epoch_fraction: f64,
    pub arrivals: u64,
    pub departures: u64,
    /// Total content at each epoch, before arrivals, for the first
    /// `trace_len` epochs.
    pub occupancy_trace: Vec<u64>,
}

pub fn queue_simulate(system: &QueueSystem, policy: &PriorityPolicy, epochs: u64, seed: u64, trace_len: usize) -> Result<QueueStats> {
    let thresholds: Vec<u64> = system.arrival_probs.iter().map(rational::scaled_u64).collect();
    let certain: Vec<bool> = system.arrival_probs.iter().map(|p| p.is_one()).collect();
    let mut rng = episode_rng(seed, 0);
    let chain = embedded_chain(system, policy);
    let n = system.buffers();
    let mut state = alloc::vec![0u64; n];
    let mut sums = alloc::vec![0u128; n];
    let (mut block_sum, mut block_sq) = (0u128, 0u128);
    let (mut empty, mut arrived, mut departed) = (0u64, 0u64, 0u64);
    let mut trace = Vec::with_capacity(trace_len.min(epochs as usize));
    let mut arrivals = alloc::vec![false; system.types()];
    for e in 0..epochs {
        let total: u64 = state.iter().sum();
        if total == 0 {
            empty += 1;
        }
        if (e as usize) < trace_len {
            trace.push(total);
        }
        for (i, a) in arrivals.iter_mut().enumerate() {
            *a = certain[i] || rng.next_u64() < thresholds[i];
        }
        arrived += arrivals.iter().filter(|&&a| a).count() as u64;
        let (seen, end) = chain.block(&state, &arrivals)?;
        let mut block_total = 0u128;
        for b in &seen {
            for (s, &x) in sums.iter_mut().zip(b) {
                *s += u128::from(x);
                block_total += u128::from(x);
            }
        }
        block_sum += block_total;
        block_sq += block_total * block_total;
        departed += state.iter().sum::<u64>() + arrivals.iter().filter(|&&a| a).count() as u64 - end.iter().sum::<u64>();
        state = end;
    }
    let units = (epochs * u64::from(system.slot)) as f64;
    let m = f64::from(system.slot);
    let k = epochs as f64;
    let mean_block = block_sum as f64 / k;
    let var_block = (block_sq as f64 / k - mean_block * mean_block).max(0.0);
    Ok(QueueStats {
        epochs,
        mean_occupancy: sums.iter().map(|&s| s as f64 / units).collect(),
        occupancy_std_error: libm::sqrt(var_block / k) / m,
        empty_epoch_fraction: empty as f64 / k,
        arrivals: arrived,
        departures: departed,
        occupancy_trace: trace,
    })
}
