//! Two-counter machines.
//!
//! A machine has states `s_0..s_{m-1}` and a (possibly partial) update map
//! from `(state, guard)` to `(next state, action)`, where the guard records
//! which counters are positive. Action codes follow the usual convention:
//! `±1` moves counter 1, `±2` moves counter 2, `0` leaves both alone.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Inc1,
    Dec1,
    Inc2,
    Dec2,
    Stay,
}

impl Action {
    pub fn from_code(code: i8) -> Result<Action> {
        Ok(match code {
            1 => Action::Inc1,
            -1 => Action::Dec1,
            2 => Action::Inc2,
            -2 => Action::Dec2,
            0 => Action::Stay,
            other => return Err(Error::MachineDefinition(alloc::format!("unknown action {other}"))),
        })
    }

    pub fn code(self) -> i8 {
        match self {
            Action::Inc1 => 1,
            Action::Dec1 => -1,
            Action::Inc2 => 2,
            Action::Dec2 => -2,
            Action::Stay => 0,
        }
    }

    /// Change of `(z1, z2)`.
    pub fn counter_delta(self) -> (i8, i8) {
        match self {
            Action::Inc1 => (1, 0),
            Action::Dec1 => (-1, 0),
            Action::Inc2 => (0, 1),
            Action::Dec2 => (0, -1),
            Action::Stay => (0, 0),
        }
    }
}

/// Positivity pattern `(b1, b2)` of the two counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Guard {
    pub b1: bool,
    pub b2: bool,
}

impl Guard {
    pub const ALL: [Guard; 4] = [
        Guard { b1: false, b2: false },
        Guard { b1: true, b2: false },
        Guard { b1: false, b2: true },
        Guard { b1: true, b2: true },
    ];

    pub fn new(b1: bool, b2: bool) -> Guard {
        Guard { b1, b2 }
    }

    pub fn of(config: &Configuration) -> Guard {
        Guard { b1: config.z1 > 0, b2: config.z2 > 0 }
    }

    fn allows(self, action: Action) -> bool {
        match action {
            Action::Dec1 => self.b1,
            Action::Dec2 => self.b2,
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub z1: u64,
    pub z2: u64,
}

impl Configuration {
    pub fn new(state: StateId, z1: u64, z2: u64) -> Self {
        Configuration { state, z1, z2 }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s{},{},{})", self.state, self.z1, self.z2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub next: StateId,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterMachine {
    names: Vec<String>,
    gamma: BTreeMap<(StateId, Guard), Transition>,
    halting: Configuration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    /// The halting configuration was re-entered after this many steps (≥ 1).
    Halted(u64),
    /// Budget exhausted; configuration after the last step.
    Running(Configuration),
}

impl CounterMachine {
    pub fn new(names: Vec<String>, halting: Configuration) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::MachineDefinition("machine has no states".into()));
        }
        if halting.state >= names.len() {
            return Err(Error::MachineDefinition(alloc::format!("halting state {} out of range", halting.state)));
        }
        Ok(CounterMachine { names, gamma: BTreeMap::new(), halting })
    }

    /// Builds a machine with states named `s0..s{m-1}`.
    pub fn with_states(m: usize, halting: Configuration) -> Result<Self> {
        Self::new((0..m).map(|i| alloc::format!("s{i}")).collect(), halting)
    }

    pub fn add_rule(&mut self, state: StateId, guard: Guard, next: StateId, action: Action) -> Result<()> {
        let m = self.names.len();
        if state >= m || next >= m {
            return Err(Error::MachineDefinition(alloc::format!("state index out of range in rule for s{state}")));
        }
        if !guard.allows(action) {
            return Err(Error::MachineDefinition(alloc::format!(
                "rule at ({}, ({},{})) decrements an empty counter",
                self.names[state],
                u8::from(guard.b1),
                u8::from(guard.b2)
            )));
        }
        if self.gamma.insert((state, guard), Transition { next, action }).is_some() {
            return Err(Error::MachineDefinition(alloc::format!(
                "duplicate rule at ({}, ({},{}))",
                self.names[state],
                u8::from(guard.b1),
                u8::from(guard.b2)
            )));
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn halting(&self) -> Configuration {
        self.halting
    }

    pub fn rule(&self, state: StateId, guard: Guard) -> Option<Transition> {
        self.gamma.get(&(state, guard)).copied()
    }

    pub fn rules(&self) -> impl Iterator<Item = (StateId, Guard, Transition)> + '_ {
        self.gamma.iter().map(|(&(s, g), &t)| (s, g, t))
    }

    /// Same machine with states permuted so that `perm[old] = new`.
    pub fn relabel(&self, perm: &[StateId]) -> Result<CounterMachine> {
        let m = self.names.len();
        let mut names = alloc::vec![String::new(); m];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = self.names[old].clone();
        }
        let halting = Configuration { state: perm[self.halting.state], ..self.halting };
        let mut out = CounterMachine::new(names, halting)?;
        for (s, g, t) in self.rules() {
            out.add_rule(perm[s], g, perm[t.next], t.action)?;
        }
        Ok(out)
    }

    pub fn step(&self, config: &Configuration) -> Result<Configuration> {
        let guard = Guard::of(config);
        let t = self.rule(config.state, guard).ok_or(Error::StuckConfiguration {
            state: config.state,
            b1: u8::from(guard.b1),
            b2: u8::from(guard.b2),
        })?;
        let (d1, d2) = t.action.counter_delta();
        let z1 = config.z1.checked_add_signed(i64::from(d1));
        let z2 = config.z2.checked_add_signed(i64::from(d2));
        match (z1, z2) {
            (Some(z1), Some(z2)) => Ok(Configuration { state: t.next, z1, z2 }),
            _ => Err(Error::MachineDefinition(alloc::format!("counter would go negative at {config}"))),
        }
    }

    /// Runs up to `max_steps` steps. Starting in the halting configuration
    /// does not count: halting means re-entering it at some step `T ≥ 1`.
    pub fn run(&self, start: Configuration, max_steps: u64) -> Result<RunOutcome> {
        let mut config = start;
        for t in 1..=max_steps {
            config = self.step(&config)?;
            if config == self.halting {
                return Ok(RunOutcome::Halted(t));
            }
        }
        Ok(RunOutcome::Running(config))
    }

    /// Configurations `c_0 = start, c_1, …, c_steps`, stopping early at halt.
    pub fn trace(&self, start: Configuration, steps: u64) -> Result<Vec<Configuration>> {
        let mut out = alloc::vec![start];
        let mut config = start;
        for _ in 0..steps {
            config = self.step(&config)?;
            out.push(config);
            if config == self.halting {
                break;
            }
        }
        Ok(out)
    }
}

/// Small machines used by tests, examples and the acceptance suite.
pub mod samples {
    use super::*;

    /// `s0 -(0,0)-> s1, +1` then `s1 -(1,0)-> s0, -1`: halts after 2 steps.
    pub fn halt_in_two() -> CounterMachine {
        let mut m = CounterMachine::with_states(2, Configuration::new(0, 0, 0)).unwrap();
        m.add_rule(0, Guard::new(false, false), 1, Action::Inc1).unwrap();
        m.add_rule(1, Guard::new(true, false), 0, Action::Dec1).unwrap();
        m
    }

    /// `s0 -(0,0)-> s1, +1` then `s1 -(1,0)-> s1, +1` forever.
    pub fn count_forever() -> CounterMachine {
        let mut m = CounterMachine::with_states(2, Configuration::new(0, 0, 0)).unwrap();
        m.add_rule(0, Guard::new(false, false), 1, Action::Inc1).unwrap();
        m.add_rule(1, Guard::new(true, false), 1, Action::Inc1).unwrap();
        m
    }

    /// Pumps `k ≥ 1` units into counter 1, moves them to counter 2 and back,
    /// drains counter 1 and halts. Uses every action. Halts after `6k + 4`
    /// steps.
    pub fn shuttle(k: u64) -> CounterMachine {
        assert!(k >= 1);
        // states 1..=k pump z1; a/a2 move z1 -> z2; b/b2 move z2 -> z1; c drains z1
        let pump = k as usize;
        let a = pump + 1; // z1 -> z2
        let a2 = pump + 2;
        let b = pump + 3; // z2 -> z1
        let b2 = pump + 4;
        let c = pump + 5; // drain z1
        let mut m = CounterMachine::with_states(pump + 6, Configuration::new(0, 0, 0)).unwrap();
        let all = Guard::ALL;
        // s0 at (0,0): start pumping
        m.add_rule(0, Guard::new(false, false), 1, Action::Stay).unwrap();
        for i in 1..=pump {
            let next = if i == pump { a } else { i + 1 };
            for g in all {
                m.add_rule(i, g, next, Action::Inc1).unwrap();
            }
        }
        // a: if z1 > 0 decrement z1 and go to a2, else go to b
        for g in all {
            if g.b1 {
                m.add_rule(a, g, a2, Action::Dec1).unwrap();
            } else {
                m.add_rule(a, g, b, Action::Stay).unwrap();
            }
            m.add_rule(a2, g, a, Action::Inc2).unwrap();
            if g.b2 {
                m.add_rule(b, g, b2, Action::Dec2).unwrap();
            } else {
                m.add_rule(b, g, c, Action::Stay).unwrap();
            }
            m.add_rule(b2, g, b, Action::Inc1).unwrap();
            if g.b1 {
                m.add_rule(c, g, c, Action::Dec1).unwrap();
            } else {
                m.add_rule(c, g, 0, Action::Stay).unwrap();
            }
        }
        m
    }
}
