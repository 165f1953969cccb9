use alloc::string::String;

use crate::rational::Prob;
use crate::walk::{Face, WalkState};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} not supported (1..=64)")]
    UnsupportedDimension(usize),
    #[error("dead face {face} reached at state {state}")]
    DeadFace { face: Face, state: WalkState },
    #[error("step from {state} would leave the orthant (coordinate {coord})")]
    NegativeCoordinate { state: WalkState, coord: usize },
    #[error("stuck configuration: no rule for state {state} with guard ({b1},{b2})")]
    StuckConfiguration { state: usize, b1: u8, b2: u8 },
    #[error("machine definition error: {0}")]
    MachineDefinition(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("state-space cap of {cap} states exceeded")]
    StateCap { cap: usize },
    #[error("reachable class exceeds {cap} states; use return-time or Monte Carlo modes")]
    InfiniteClass { cap: usize },
    #[error("seed state is transient: {0} reachable states never return")]
    TransientSeed(usize),
    #[error("no contracting delta in (0, {delta_hi}]: worst face {face} has ratio {ratio}")]
    NoContractingDelta { delta_hi: f64, face: Face, ratio: f64 },
    #[error("face closure reached a non-configuration face {0} while the survival bit is set")]
    UnreachableFace(Face),
    #[error("formula does not apply: {0}")]
    NotApplicable(String),
    #[error("required horizon {required} exceeds cap {cap}")]
    HorizonCap { required: u64, cap: u64 },
    #[error("policy inconsistent at occupancy {bits:#b}: serves buffer {buffer} which is empty")]
    InconsistentPolicy { bits: u64, buffer: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("probability {0} outside [0, 1]")]
    Probability(Prob),
}
