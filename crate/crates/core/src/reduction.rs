//! Compiling counter machines into walks on the orthant.
//!
//! Coordinate layout (0-based) for a machine with `m` states:
//!
//! | coordinates      | role                                  |
//! |------------------|---------------------------------------|
//! | `0..m-1`         | unit vector `e_i` for state `s_i`, i ≥ 1 |
//! | `m-1`, `m`       | counters `z1`, `z2`                   |
//! | `m+1`            | `q1`, step bookkeeping (moves by 0..2 up, 1 down) |
//! | `m+2`            | `q2`, survival bit                    |
//! | `m+3`            | `q3`, optional height marker          |
//!
//! The deterministic walk uses only the first `m+1` coordinates.
//!
//! In the extended walk, while `q2 = 1` each step runs one machine step and
//! sets `q1` so that `z1 + z2 + q1` grows by exactly one; `q2` survives with
//! probability `p`. Once `q2 = 0` the walk drains one unit of `z1 + z2 + q1`
//! per step (a state unit is removed together with the next positive
//! coordinate, so it costs no time), then `q3` drains, then the origin
//! restarts the cycle. The first return to the origin therefore takes
//! `2s` steps (`3s` with `q3`), where `s ≥ 1` is the number of steps spent
//! with the survival bit set, including the restart.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::machine::{Configuration, CounterMachine, Guard, RunOutcome, StateId};
use crate::rational::{self, Prob};
use crate::walk::{Face, Rule, TransitionKernel, WalkState};
use crate::{Error, Result};

/// Largest machine for which every non-configuration face of the
/// deterministic walk is materialized.
const FULL_FACE_LIMIT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub states: usize,
    pub extended: bool,
    pub with_q3: bool,
}

impl Layout {
    pub fn dimension(&self) -> usize {
        match (self.extended, self.with_q3) {
            (false, _) => self.states + 1,
            (true, false) => self.states + 3,
            (true, true) => self.states + 4,
        }
    }

    /// Coordinate of the unit for state `s_i`, `i ≥ 1`.
    pub fn state_unit(&self, i: StateId) -> usize {
        i - 1
    }

    pub fn is_state_unit(&self, coord: usize) -> bool {
        coord + 1 < self.states
    }

    pub fn z1(&self) -> usize {
        self.states - 1
    }

    pub fn z2(&self) -> usize {
        self.states
    }

    pub fn q1(&self) -> usize {
        self.states + 1
    }

    pub fn q2(&self) -> usize {
        self.states + 2
    }

    pub fn q3(&self) -> Option<usize> {
        self.with_q3.then_some(self.states + 3)
    }

    /// Number of coordinates in the machine part `Q`.
    pub fn machine_part(&self) -> usize {
        self.states + 1
    }

    fn machine_face(&self, face: Face) -> Face {
        Face(face.0 & ((1u64 << self.machine_part()) - 1))
    }

    fn is_binary(&self, coord: usize) -> bool {
        self.is_state_unit(coord) || (self.extended && coord == self.q2())
    }

    /// `(state, guard)` encoded by the machine part of a face, if any.
    pub fn decode_face(&self, face: Face) -> Option<(StateId, Guard)> {
        let units: Vec<usize> = (0..self.states - 1).filter(|&c| face.contains(c)).collect();
        let state = match units[..] {
            [] => 0,
            [c] => c + 1,
            _ => return None,
        };
        Some((state, Guard::new(face.contains(self.z1()), face.contains(self.z2()))))
    }

    pub fn encode(&self, config: &Configuration) -> WalkState {
        let mut v = alloc::vec![0u64; self.dimension()];
        if config.state > 0 {
            v[self.state_unit(config.state)] = 1;
        }
        v[self.z1()] = config.z1;
        v[self.z2()] = config.z2;
        WalkState(v)
    }

    pub fn decode(&self, state: &WalkState) -> Option<Configuration> {
        let q = &state.0[..self.machine_part()];
        let mut unit = None;
        for (c, &x) in q[..self.states - 1].iter().enumerate() {
            match (x, unit) {
                (0, _) => {}
                (1, None) => unit = Some(c + 1),
                _ => return None,
            }
        }
        Some(Configuration::new(unit.unwrap_or(0), q[self.z1()], q[self.z2()]))
    }

    /// Machine-step delta restricted to the machine part.
    fn machine_delta(&self, from: StateId, to: StateId, action: crate::machine::Action, delta: &mut [i8]) -> i8 {
        if from > 0 {
            delta[self.state_unit(from)] -= 1;
        }
        if to > 0 {
            delta[self.state_unit(to)] += 1;
        }
        let (d1, d2) = action.counter_delta();
        delta[self.z1()] += d1;
        delta[self.z2()] += d2;
        d1 + d2
    }

    /// Successor faces of `face` under `delta`, tracking the 0/1 coordinates
    /// exactly and the others as zero/positive.
    fn successor_faces(&self, face: Face, delta: &[i8]) -> Result<Vec<Face>> {
        let mut faces = alloc::vec![face];
        for (c, &d) in delta.iter().enumerate() {
            if d == 0 {
                continue;
            }
            if d > 0 {
                if self.is_binary(c) && face.contains(c) {
                    return Err(Error::InvalidKernel(alloc::format!("binary coordinate {} exceeds 1", c + 1)));
                }
                faces.iter_mut().for_each(|f| *f = f.with(c));
            } else {
                if !face.contains(c) {
                    return Err(Error::InvalidKernel(alloc::format!("negative move off face {face}")));
                }
                if self.is_binary(c) || d < -1 {
                    faces.iter_mut().for_each(|f| *f = f.without(c));
                } else {
                    faces = faces.into_iter().flat_map(|f| [f, f.without(c)]).collect();
                }
            }
        }
        Ok(faces)
    }
}

/// Puts the halting state first, as the encoding requires.
fn normalize(machine: &CounterMachine) -> Result<(CounterMachine, Vec<StateId>)> {
    let halting = machine.halting();
    if halting.z1 != 0 || halting.z2 != 0 {
        return Err(Error::NotApplicable("halting configuration must have both counters at zero".into()));
    }
    let m = machine.state_count();
    if m < 2 {
        return Err(Error::NotApplicable("at least two machine states are needed".into()));
    }
    if m + 4 > 64 {
        return Err(Error::UnsupportedDimension(m + 4));
    }
    let mut perm: Vec<StateId> = (0..m).collect();
    perm.swap(0, halting.state);
    Ok((machine.relabel(&perm)?, perm))
}

/// The deterministic walk in `Z_+^{m+1}`.
#[derive(Clone, Debug)]
pub struct DeterministicWalk {
    pub kernel: TransitionKernel,
    pub layout: Layout,
    /// Machine with the halting state relabelled to `s_0`.
    pub machine: CounterMachine,
    perm: Vec<StateId>,
}

impl DeterministicWalk {
    pub fn encode(&self, config: &Configuration) -> WalkState {
        self.layout.encode(&Configuration { state: self.perm[config.state], ..*config })
    }

    pub fn decode(&self, state: &WalkState) -> Option<Configuration> {
        let c = self.layout.decode(state)?;
        let original = self.perm.iter().position(|&p| p == c.state)?;
        Some(Configuration { state: original, ..c })
    }

    /// Runs machine and walk side by side from `start` for `steps` steps.
    pub fn bisimulation_check(&self, machine: &CounterMachine, start: Configuration, steps: u64) -> BisimulationReport {
        let mut config = start;
        let mut state = self.encode(&start);
        for t in 1..=steps {
            let next_config = match machine.step(&config) {
                Ok(c) => c,
                Err(_) => return BisimulationReport { steps_checked: t - 1, divergence: None },
            };
            let next_state = match self.kernel.step_distribution(&state) {
                Ok(succ) if succ.len() == 1 => succ.into_iter().next().map(|(s, _)| s).unwrap_or_default(),
                _ => WalkState::default(),
            };
            let expected = self.encode(&next_config);
            if expected != next_state {
                return BisimulationReport {
                    steps_checked: t,
                    divergence: Some(Divergence { t, expected, found: next_state }),
                };
            }
            config = next_config;
            state = next_state;
        }
        BisimulationReport { steps_checked: steps, divergence: None }
    }
}

pub fn compile_deterministic(machine: &CounterMachine) -> Result<DeterministicWalk> {
    let (machine, perm) = normalize(machine)?;
    let m = machine.state_count();
    let layout = Layout { states: m, extended: false, with_q3: false };
    let d = layout.dimension();
    let mut kernel = TransitionKernel::new(d)?;
    let counters = [layout.z1(), layout.z2()];
    for state in 0..m {
        for guard in Guard::ALL {
            let Some(t) = machine.rule(state, guard) else { continue };
            let mut face = Face::EMPTY;
            if state > 0 {
                face = face.with(layout.state_unit(state));
            }
            if guard.b1 {
                face = face.with(counters[0]);
            }
            if guard.b2 {
                face = face.with(counters[1]);
            }
            let mut delta = alloc::vec![0i8; d];
            layout.machine_delta(state, t.next, t.action, &mut delta);
            kernel.add_rule(face, delta, Prob::one())?;
        }
    }
    if m <= FULL_FACE_LIMIT {
        // faces with two or more state units: drain the smallest coordinate
        for units in 0u64..(1u64 << (m - 1)) {
            if units.count_ones() < 2 {
                continue;
            }
            for g in 0u64..4 {
                let face = Face(units | g << layout.z1());
                let smallest = face.indices().next().unwrap_or(0);
                let mut delta = alloc::vec![0i8; d];
                delta[smallest] = -1;
                kernel.add_rule(face, delta, Prob::one())?;
            }
        }
    }
    Ok(DeterministicWalk { kernel, layout, machine, perm })
}

/// Linear Lyapunov certificate `Φ(q) = w·q` with drift `-gamma` outside the
/// exception set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCertificate {
    pub w: Vec<Prob>,
    pub gamma: Prob,
    pub exception_set: Vec<WalkState>,
}

#[derive(Clone, Debug)]
pub struct CompiledWalk {
    pub kernel: TransitionKernel,
    pub layout: Layout,
    /// Machine with the halting state relabelled to `s_0`.
    pub machine: CounterMachine,
    pub p: Prob,
    pub certificate: LinearCertificate,
    perm: Vec<StateId>,
}

/// Default `C`: `2/(1-p)`, or `3/(1-p)` when `q3` is present.
pub fn default_c(p: &Prob, with_q3: bool) -> Prob {
    let k = if with_q3 { 3 } else { 2 };
    rational::int(k) / (Prob::one() - p)
}

pub fn compile_extended(machine: &CounterMachine, p: &Prob, with_q3: bool, c: Option<Prob>) -> Result<CompiledWalk> {
    if *p <= Prob::zero() || *p >= Prob::one() {
        return Err(Error::Parameter(alloc::format!("p = {p} outside (0,1)")));
    }
    let c = c.unwrap_or_else(|| default_c(p, with_q3));
    if c <= Prob::zero() {
        return Err(Error::Parameter(alloc::format!("C = {c} must be positive")));
    }
    let (machine, perm) = normalize(machine)?;
    let layout = Layout { states: machine.state_count(), extended: true, with_q3 };
    let d = layout.dimension();
    let mut kernel = TransitionKernel::new(d)?;
    kernel.set_lenient(Face::EMPTY.with(layout.q1()));

    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(Face::EMPTY);
    queue.push_back(Face::EMPTY);
    while let Some(face) = queue.pop_front() {
        let rules = extended_rules(&machine, &layout, p, face)?;
        for rule in &rules {
            for next in layout.successor_faces(face, &rule.delta)? {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        if !rules.is_empty() {
            kernel.set_face_rules(face, rules);
        }
    }

    let mut w = alloc::vec![Prob::zero(); d];
    w[layout.z1()] = Prob::one();
    w[layout.z2()] = Prob::one();
    w[layout.q1()] = Prob::one();
    w[layout.q2()] = c;
    if let Some(q3) = layout.q3() {
        w[q3] = Prob::one();
    }
    let certificate = LinearCertificate { w, gamma: Prob::one(), exception_set: alloc::vec![WalkState::origin(d)] };
    Ok(CompiledWalk { kernel, layout, machine, p: p.clone(), certificate, perm })
}

/// Rules of the extended walk on one face. Empty when the machine has no
/// rule there.
fn extended_rules(machine: &CounterMachine, layout: &Layout, p: &Prob, face: Face) -> Result<Vec<Rule>> {
    let d = layout.dimension();
    let q = layout.machine_face(face);
    let one_minus_p = Prob::one() - p;
    let mut rules = Vec::new();

    // one machine step plus q1/q3 bookkeeping; survival branch filled by caller
    let machine_step = |state: StateId, guard: Guard| -> Option<Vec<i8>> {
        let t = machine.rule(state, guard)?;
        let mut delta = alloc::vec![0i8; d];
        let counter_change = layout.machine_delta(state, t.next, t.action, &mut delta);
        delta[layout.q1()] = 1 - counter_change;
        if let Some(q3) = layout.q3() {
            delta[q3] = 1;
        }
        Some(delta)
    };

    if face.contains(layout.q2()) {
        if q.is_empty() {
            // halting configuration reached while surviving
            let mut delta = alloc::vec![0i8; d];
            delta[layout.q1()] = 1;
            delta[layout.q2()] = -1;
            if let Some(q3) = layout.q3() {
                delta[q3] = 1;
            }
            rules.push(Rule { delta, prob: Prob::one() });
            return Ok(rules);
        }
        let (state, guard) = layout.decode_face(q).ok_or(Error::UnreachableFace(face))?;
        if let Some(delta) = machine_step(state, guard) {
            let mut fail = delta.clone();
            fail[layout.q2()] = -1;
            rules.push(Rule { delta, prob: p.clone() });
            rules.push(Rule { delta: fail, prob: one_minus_p });
        }
        return Ok(rules);
    }

    let drainable = Face(q.0 | (face.0 & (1u64 << layout.q1())));
    if !drainable.is_empty() {
        let mut positive = drainable.indices();
        let mut delta = alloc::vec![0i8; d];
        if let Some(k) = positive.next() {
            delta[k] = -1;
            if layout.is_state_unit(k) {
                if let Some(k2) = positive.next() {
                    delta[k2] = -1;
                }
            }
        }
        rules.push(Rule { delta, prob: Prob::one() });
        return Ok(rules);
    }

    if let Some(q3) = layout.q3().filter(|&q3| face.contains(q3)) {
        let mut delta = alloc::vec![0i8; d];
        delta[q3] = -1;
        rules.push(Rule { delta, prob: Prob::one() });
        return Ok(rules);
    }

    // origin: restart with one machine step from (s0, 0, 0)
    let delta = machine_step(0, Guard::new(false, false))
        .ok_or_else(|| Error::MachineDefinition("no rule at (s0, (0,0)); the machine cannot start".into()))?;
    let mut survive = delta.clone();
    survive[layout.q2()] = 1;
    rules.push(Rule { delta: survive, prob: p.clone() });
    rules.push(Rule { delta, prob: one_minus_p });
    Ok(rules)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub t: u64,
    pub expected: WalkState,
    pub found: WalkState,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BisimulationReport {
    pub steps_checked: u64,
    pub divergence: Option<Divergence>,
}

impl BisimulationReport {
    pub fn agrees(&self) -> bool {
        self.divergence.is_none()
    }
}

impl CompiledWalk {
    /// Full-dimension state encoding `config` with `q1 = q2 = q3 = 0`.
    pub fn encode(&self, config: &Configuration) -> WalkState {
        self.layout.encode(&Configuration { state: self.perm[config.state], ..*config })
    }

    pub fn decode(&self, state: &WalkState) -> Option<Configuration> {
        let c = self.layout.decode(state)?;
        let original = self.perm.iter().position(|&p| p == c.state)?;
        Some(Configuration { state: original, ..c })
    }

    pub fn origin(&self) -> WalkState {
        WalkState::origin(self.layout.dimension())
    }

    /// Successor with the survival bit forced to `survive`, if the step
    /// branches on it; the unique successor otherwise.
    fn forced_step(&self, state: &WalkState, survive: bool) -> Result<(WalkState, Prob, bool)> {
        let succ = self.kernel.step_distribution(state)?;
        if succ.len() == 1 {
            let (s, pr) = succ.into_iter().next().unwrap_or_default();
            return Ok((s, pr, false));
        }
        let q2 = self.layout.q2();
        succ.into_iter()
            .find(|(s, _)| (s.0[q2] == 1) == survive)
            .map(|(s, pr)| (s, pr, true))
            .ok_or_else(|| Error::InvalidKernel("branching step does not split on the survival bit".into()))
    }

    /// Runs `machine` (original labels) and the walk with the survival bit
    /// held at 1, comparing the machine part after each step. Stops early when
    /// the machine halts.
    pub fn bisimulation_check(&self, machine: &CounterMachine, steps: u64) -> BisimulationReport {
        let mut config = machine.halting();
        let mut state = self.origin();
        let mpart = self.layout.machine_part();
        for t in 1..=steps {
            let next_config = match machine.step(&config) {
                Ok(c) => c,
                Err(_) => return BisimulationReport { steps_checked: t - 1, divergence: None },
            };
            let next_state = self.forced_step(&state, true).map(|r| r.0).unwrap_or_default();
            let expected = WalkState(self.encode(&next_config).0[..mpart].to_vec());
            let found = WalkState(next_state.0.get(..mpart).map(<[u64]>::to_vec).unwrap_or_default());
            if expected != found {
                return BisimulationReport { steps_checked: t, divergence: Some(Divergence { t, expected, found }) };
            }
            if next_config == machine.halting() {
                return BisimulationReport { steps_checked: t, divergence: None };
            }
            config = next_config;
            state = next_state;
        }
        BisimulationReport { steps_checked: steps, divergence: None }
    }

    /// One excursion from the origin with exactly `successes` survival draws
    /// (or fewer, if the machine halts first).
    pub fn run_branch(&self, successes: u64, targets: &BTreeMap<WalkState, usize>, max_len: u64) -> Result<Branch> {
        let origin = self.origin();
        let mut state = origin.clone();
        let mut prob = Prob::one();
        let mut left = successes;
        let mut visits = alloc::vec![0u64; targets.len()];
        let mut halted = false;
        for t in 1..=max_len {
            let surviving = state.0[self.layout.q2()] == 1;
            let (next, pr, branched) = self.forced_step(&state, left > 0)?;
            if branched && next.0[self.layout.q2()] == 1 {
                left -= 1;
            }
            if surviving && !branched {
                halted = true;
            }
            prob *= pr;
            state = next;
            if let Some(&j) = targets.get(&state) {
                visits[j] += 1;
            }
            if state == origin {
                return Ok(Branch { successes: successes - left, length: t, prob, visits, halted });
            }
        }
        Err(Error::HorizonCap { required: max_len + 1, cap: max_len })
    }

    /// Enumerates excursions from the origin by number of survival draws.
    ///
    /// Enumeration is exhaustive when the machine halts within the checked
    /// budget. Otherwise branches beyond `budget` are closed analytically
    /// with the linear pattern observed on the enumerated ones, which holds
    /// as long as the machine keeps running.
    pub fn cycle_profile(&self, budget: u64, targets: &[WalkState], machine_budget: u64) -> Result<CycleProfile> {
        let index: BTreeMap<WalkState, usize> = targets.iter().cloned().enumerate().map(|(j, s)| (s, j)).collect();
        let budget = budget.max(3);
        let halt = match self.machine.run(self.machine.halting(), machine_budget)? {
            RunOutcome::Halted(t) => Some(t),
            RunOutcome::Running(_) => None,
        };
        let limit = halt.map_or(budget, |t| t + 1);
        let max_len = 8 * (limit + 2) + 16;
        let mut branches = Vec::new();
        for k in 0..limit.max(budget) {
            let b = self.run_branch(k, &index, max_len)?;
            let halted = b.halted;
            branches.push(b);
            if halted {
                return Ok(CycleProfile { branches, targets: targets.to_vec(), tail: None, halting_time: halt });
            }
        }
        let tail = TailLaw::fit(&branches)?;
        Ok(CycleProfile { branches, targets: targets.to_vec(), tail: Some(tail), halting_time: halt })
    }
}

/// One excursion from the origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub successes: u64,
    pub length: u64,
    pub prob: Prob,
    /// Visits to each target during the excursion (return included).
    pub visits: Vec<u64>,
    /// The survival bit was cleared by the halting configuration.
    pub halted: bool,
}

/// Closed-form continuation of the branch sequence: branch `k ≥ K` has
/// probability `rest·(1-s)·s^(k-K)`, length `a·k + b` and constant visits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TailLaw {
    pub first: u64,
    pub rest: Prob,
    pub survival: Prob,
    pub slope: u64,
    pub intercept: i64,
    pub visits: Vec<u64>,
}

impl TailLaw {
    fn fit(branches: &[Branch]) -> Result<TailLaw> {
        let n = branches.len();
        let last = &branches[n - 1];
        let prev = &branches[n - 2];
        let not_linear = || Error::NotApplicable("enumerated excursions do not follow a linear pattern".into());
        let slope = last.length.checked_sub(prev.length).ok_or_else(not_linear)?;
        let intercept = last.length as i64 - (slope * (n as u64 - 1)) as i64;
        let survival = &last.prob / &prev.prob;
        for (k, b) in branches.iter().enumerate().skip(1) {
            if b.length as i64 != intercept + (slope * k as u64) as i64 {
                return Err(not_linear());
            }
            if k >= 2 && b.prob != &branches[k - 1].prob * &survival {
                return Err(not_linear());
            }
        }
        let total: Prob = branches.iter().map(|b| &b.prob).sum();
        Ok(TailLaw {
            first: n as u64,
            rest: Prob::one() - total,
            survival,
            slope,
            intercept,
            visits: last.visits.clone(),
        })
    }

    fn length(&self, k: u64) -> u64 {
        (self.intercept + (self.slope * k) as i64) as u64
    }

    /// First tail index whose excursion is longer than `h`.
    fn first_beyond(&self, h: u64) -> u64 {
        let mut k = self.first;
        if self.slope > 0 && self.length(k) <= h {
            k = ((h as i64 - self.intercept) / self.slope as i64 + 1).max(self.first as i64) as u64;
            while self.length(k) <= h {
                k += 1;
            }
        }
        k
    }

    /// `(mass, E[length·1{k ≥ k0}])` over tail branches `k ≥ k0`.
    fn moments_from(&self, k0: u64) -> (Prob, Prob) {
        let s = &self.survival;
        let mass = &self.rest * rational::pow(s, (k0 - self.first) as u32);
        let mean_k = rational::int(k0 as i64) + s / (Prob::one() - s);
        let mean_len = rational::int(self.slope as i64) * mean_k + rational::int(self.intercept);
        (mass.clone(), mass * mean_len)
    }
}

/// Excursion law of a compiled walk from its origin.
#[derive(Clone, Debug)]
pub struct CycleProfile {
    pub branches: Vec<Branch>,
    pub targets: Vec<WalkState>,
    /// `None` when enumeration was exhaustive.
    pub tail: Option<TailLaw>,
    pub halting_time: Option<u64>,
}

impl CycleProfile {
    pub fn is_exhaustive(&self) -> bool {
        self.tail.is_none()
    }

    /// Exact first-return pmf on lengths `≤ h`.
    pub fn pmf_upto(&self, h: u64) -> BTreeMap<u64, Prob> {
        let mut pmf: BTreeMap<u64, Prob> = BTreeMap::new();
        for b in self.branches.iter().filter(|b| b.length <= h) {
            *pmf.entry(b.length).or_insert_with(Prob::zero) += &b.prob;
        }
        if let Some(tail) = &self.tail {
            let mut k = tail.first;
            while tail.length(k) <= h {
                let (m0, _) = tail.moments_from(k);
                let (m1, _) = tail.moments_from(k + 1);
                *pmf.entry(tail.length(k)).or_insert_with(Prob::zero) += m0 - m1;
                k += 1;
                if tail.slope == 0 {
                    break;
                }
            }
        }
        pmf
    }

    /// `(P(R > h), E[R·1{R > h}])`.
    pub fn beyond(&self, h: u64) -> (Prob, Prob) {
        let mut mass = Prob::zero();
        let mut moment = Prob::zero();
        for b in self.branches.iter().filter(|b| b.length > h) {
            mass += &b.prob;
            moment += &b.prob * rational::int(b.length as i64);
        }
        if let Some(tail) = &self.tail {
            let (m, e) = tail.moments_from(tail.first_beyond(h));
            mass += m;
            moment += e;
        }
        (mass, moment)
    }

    /// `E[R]`.
    pub fn mean_length(&self) -> Prob {
        self.beyond(0).1
    }

    /// `(P(visit j), E[R·1{visit j}], E[visits to j])`.
    pub fn visit_moments(&self, j: usize) -> (Prob, Prob, Prob) {
        let mut prob = Prob::zero();
        let mut moment = Prob::zero();
        let mut visits = Prob::zero();
        for b in &self.branches {
            if b.visits[j] > 0 {
                prob += &b.prob;
                moment += &b.prob * rational::int(b.length as i64);
                visits += &b.prob * rational::int(b.visits[j] as i64);
            }
        }
        if let Some(tail) = self.tail.as_ref().filter(|t| t.visits[j] > 0) {
            let (m, e) = tail.moments_from(tail.first);
            visits += &m * rational::int(tail.visits[j] as i64);
            prob += m;
            moment += e;
        }
        (prob, moment, visits)
    }
}
