//! State space, faces and face-homogeneous transition kernels.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Signed, Zero};
use rand::RngCore;

use crate::rational::{self, Prob};
use crate::rng::episode_rng;
use crate::{Error, Result};

/// Set of coordinates that are strictly positive, as a bitmask of 0-based
/// indices. Displayed 1-based.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Face(pub u64);

impl Face {
    pub const EMPTY: Face = Face(0);

    pub fn of(state: &WalkState) -> Face {
        Face::from_indices(state.0.iter().enumerate().filter(|(_, &x)| x > 0).map(|(i, _)| i))
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Face {
        indices.into_iter().fold(Face::EMPTY, |f, i| f.with(i))
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Face {
        Face(self.0 | 1u64 << i)
    }

    pub fn without(self, i: usize) -> Face {
        Face(self.0 & !(1u64 << i))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    /// Highest index + 1, or 0 for the empty face.
    pub fn span(self) -> usize {
        64 - self.0.leading_zeros() as usize
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Face{self}")
    }
}

/// A point of `Z_+^d`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct WalkState(pub Vec<u64>);

impl WalkState {
    pub fn origin(dimension: usize) -> WalkState {
        WalkState(alloc::vec![0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// L1 norm.
    pub fn norm(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    pub fn face(&self) -> Face {
        Face::of(self)
    }

    pub fn apply(&self, delta: &[i8]) -> Result<WalkState> {
        let mut next = self.clone();
        next.apply_in_place(delta)?;
        Ok(next)
    }

    pub fn apply_in_place(&mut self, delta: &[i8]) -> Result<()> {
        if delta.len() != self.0.len() {
            return Err(Error::DimensionMismatch { expected: self.0.len(), found: delta.len() });
        }
        for (i, (&x, &d)) in self.0.iter().zip(delta).enumerate() {
            if d < 0 && x < u64::from(d.unsigned_abs()) {
                return Err(Error::NegativeCoordinate { state: self.clone(), coord: i + 1 });
            }
        }
        for (x, &d) in self.0.iter_mut().zip(delta) {
            *x = x.wrapping_add_signed(i64::from(d));
        }
        Ok(())
    }
}

impl From<Vec<u64>> for WalkState {
    fn from(v: Vec<u64>) -> Self {
        WalkState(v)
    }
}

impl fmt::Display for WalkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for WalkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub delta: Vec<i8>,
    pub prob: Prob,
}

/// Transition law `p(face, delta)`. Faces without rules are allowed; reaching
/// one at run time is a [`Error::DeadFace`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionKernel {
    dimension: usize,
    lenient: Face,
    rules: BTreeMap<Face, Vec<Rule>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    FaceOutOfRange { face: Face },
    DeltaLength { face: Face, len: usize },
    StepOutOfRange { face: Face, delta: Vec<i8>, coord: usize },
    NegativeMoveOffFace { face: Face, delta: Vec<i8>, coord: usize },
    BadProbability { face: Face, delta: Vec<i8>, prob: Prob },
    DuplicateDelta { face: Face, delta: Vec<i8> },
    FaceMass { face: Face, mass: Prob },
}

struct Delta<'a>(&'a [i8]);

impl fmt::Display for Delta<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FaceOutOfRange { face } => write!(f, "face {face}: index beyond dimension"),
            Violation::DeltaLength { face, len } => write!(f, "face {face}: delta of length {len}"),
            Violation::StepOutOfRange { face, delta, coord } => {
                write!(f, "face {face}: step out of range in delta {} at coordinate {coord}", Delta(delta))
            }
            Violation::NegativeMoveOffFace { face, delta, coord } => write!(
                f,
                "face {face}: negative move off face in delta {} at coordinate {coord}",
                Delta(delta)
            ),
            Violation::BadProbability { face, delta, prob } => {
                write!(f, "face {face}: probability {prob} of delta {} outside [0,1]", Delta(delta))
            }
            Violation::DuplicateDelta { face, delta } => write!(f, "face {face}: duplicate delta {}", Delta(delta)),
            Violation::FaceMass { face, mass } => write!(f, "face {face}: face mass {mass} ≠ 1"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl TransitionKernel {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 || dimension > 64 {
            return Err(Error::UnsupportedDimension(dimension));
        }
        Ok(TransitionKernel { dimension, lenient: Face::EMPTY, rules: BTreeMap::new() })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Coordinates allowed to move by ±2.
    pub fn lenient(&self) -> Face {
        self.lenient
    }

    pub fn set_lenient(&mut self, lenient: Face) {
        self.lenient = lenient;
    }

    pub fn add_rule(&mut self, face: Face, delta: Vec<i8>, prob: Prob) -> Result<()> {
        if delta.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: delta.len() });
        }
        self.rules.entry(face).or_default().push(Rule { delta, prob });
        Ok(())
    }

    pub fn set_face_rules(&mut self, face: Face, rules: Vec<Rule>) {
        self.rules.insert(face, rules);
    }

    pub fn rules_for(&self, face: Face) -> Option<&[Rule]> {
        self.rules.get(&face).map(Vec::as_slice)
    }

    pub fn faces(&self) -> impl Iterator<Item = (Face, &[Rule])> {
        self.rules.iter().map(|(f, r)| (*f, r.as_slice()))
    }

    pub fn face_count(&self) -> usize {
        self.rules.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.faces().all(|(_, rules)| rules.iter().all(|r| r.prob.is_zero() || r.prob.is_one()))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (face, rules) in self.faces() {
            if face.span() > self.dimension {
                violations.push(Violation::FaceOutOfRange { face });
            }
            let mut mass = Prob::zero();
            let mut seen: Vec<&[i8]> = Vec::new();
            for rule in rules {
                if rule.delta.len() != self.dimension {
                    violations.push(Violation::DeltaLength { face, len: rule.delta.len() });
                    continue;
                }
                if seen.contains(&rule.delta.as_slice()) {
                    violations.push(Violation::DuplicateDelta { face, delta: rule.delta.clone() });
                }
                seen.push(&rule.delta);
                if !rational::is_probability(&rule.prob) {
                    violations.push(Violation::BadProbability {
                        face,
                        delta: rule.delta.clone(),
                        prob: rule.prob.clone(),
                    });
                }
                for (i, &d) in rule.delta.iter().enumerate() {
                    let bound = if self.lenient.contains(i) { 2 } else { 1 };
                    if d.abs() > bound {
                        violations.push(Violation::StepOutOfRange { face, delta: rule.delta.clone(), coord: i + 1 });
                    }
                    if d < 0 && !face.contains(i) && rule.prob.is_positive() {
                        violations.push(Violation::NegativeMoveOffFace {
                            face,
                            delta: rule.delta.clone(),
                            coord: i + 1,
                        });
                    }
                }
                mass += &rule.prob;
            }
            if !rules.is_empty() && !mass.is_one() {
                violations.push(Violation::FaceMass { face, mass });
            }
        }
        ValidationReport { violations }
    }

    fn face_rules(&self, state: &WalkState) -> Result<&[Rule]> {
        if state.dimension() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: state.dimension() });
        }
        let face = state.face();
        self.rules_for(face)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::DeadFace { face, state: state.clone() })
    }

    /// All successors with positive probability.
    pub fn step_distribution(&self, state: &WalkState) -> Result<Vec<(WalkState, Prob)>> {
        let rules = self.face_rules(state)?;
        rules
            .iter()
            .filter(|r| r.prob.is_positive())
            .map(|r| Ok((state.apply(&r.delta)?, r.prob.clone())))
            .collect()
    }

    pub fn sampler(&self) -> KernelSampler<'_> {
        let tables = self
            .faces()
            .map(|(face, rules)| {
                let mut cum = Prob::zero();
                let live: Vec<usize> = (0..rules.len()).filter(|&k| rules[k].prob.is_positive()).collect();
                let table = live
                    .iter()
                    .enumerate()
                    .map(|(pos, &k)| {
                        cum += &rules[k].prob;
                        let threshold = if pos + 1 == live.len() { u64::MAX } else { rational::scaled_u64(&cum) };
                        (threshold, k)
                    })
                    .collect();
                (face, table)
            })
            .collect();
        KernelSampler { kernel: self, tables }
    }

    /// Trajectory of `horizon + 1` states drawn with episode 0 of `seed`.
    pub fn simulate(&self, start: &WalkState, horizon: u64, seed: u64) -> Result<Vec<WalkState>> {
        if start.dimension() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: start.dimension() });
        }
        let sampler = self.sampler();
        let mut rng = episode_rng(seed, 0);
        let mut state = start.clone();
        let mut out = Vec::with_capacity(horizon as usize + 1);
        out.push(state.clone());
        for _ in 0..horizon {
            sampler.step(&mut state, &mut rng)?;
            out.push(state.clone());
        }
        Ok(out)
    }

    /// The lazy kernel `(I + P) / 2`: same stationary law, aperiodic.
    pub fn lazy(&self) -> TransitionKernel {
        let half = rational::ratio(1, 2);
        let zero = alloc::vec![0i8; self.dimension];
        let mut out = TransitionKernel { dimension: self.dimension, lenient: self.lenient, rules: BTreeMap::new() };
        for (face, rules) in self.faces() {
            if rules.is_empty() {
                continue;
            }
            let mut lazy: Vec<Rule> =
                rules.iter().map(|r| Rule { delta: r.delta.clone(), prob: &r.prob * &half }).collect();
            match lazy.iter_mut().find(|r| r.delta == zero) {
                Some(r) => r.prob += &half,
                None => lazy.push(Rule { delta: zero.clone(), prob: half.clone() }),
            }
            out.rules.insert(face, lazy);
        }
        out
    }

    /// Rewrites every lenient (±2) coordinate `k` as a pair `(k, k')` of
    /// strict coordinates; `k'` is appended after the existing ones.
    pub fn split_pm2(&self) -> Result<SplitKernel> {
        let lenient: Vec<usize> = self.lenient.indices().collect();
        let dimension = self.dimension + lenient.len();
        if dimension > 64 {
            return Err(Error::UnsupportedDimension(dimension));
        }
        let pairs: Vec<(usize, usize)> =
            lenient.iter().enumerate().map(|(n, &k)| (k, self.dimension + n)).collect();
        let mut out = TransitionKernel::new(dimension)?;
        for (face, rules) in self.faces() {
            for split_face in split_faces(face, &pairs) {
                let mut new_rules = Vec::with_capacity(rules.len());
                for rule in rules {
                    let mut delta = rule.delta.clone();
                    delta.resize(dimension, 0);
                    for &(k, k2) in &pairs {
                        let (a, b) = match rule.delta[k] {
                            2 => (1, 1),
                            1 => (1, 0),
                            0 => (0, 0),
                            -1 if split_face.contains(k) => (-1, 0),
                            -1 => (0, -1),
                            -2 if split_face.contains(k) && split_face.contains(k2) => (-1, -1),
                            _ => {
                                return Err(Error::InvalidKernel(alloc::format!(
                                    "cannot split step {} on coordinate {} at face {split_face}",
                                    rule.delta[k],
                                    k + 1
                                )))
                            }
                        };
                        delta[k] = a;
                        delta[k2] = b;
                    }
                    new_rules.push(Rule { delta, prob: rule.prob.clone() });
                }
                out.rules.insert(split_face, new_rules);
            }
        }
        Ok(SplitKernel { kernel: out, pairs })
    }
}

fn split_faces(face: Face, pairs: &[(usize, usize)]) -> Vec<Face> {
    let mut faces = alloc::vec![face];
    for &(k, k2) in pairs {
        if !face.contains(k) {
            continue;
        }
        faces = faces
            .into_iter()
            .flat_map(|f| [f, f.without(k).with(k2), f.with(k2)])
            .collect();
    }
    faces
}

/// Output of [`TransitionKernel::split_pm2`].
#[derive(Clone, Debug)]
pub struct SplitKernel {
    pub kernel: TransitionKernel,
    /// `(original coordinate, appended partner)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl SplitKernel {
    /// Projects a state of the split kernel back to the original coordinates.
    pub fn merge(&self, state: &WalkState) -> WalkState {
        let original = self.kernel.dimension - self.pairs.len();
        let mut out = WalkState(state.0[..original].to_vec());
        for &(k, k2) in &self.pairs {
            out.0[k] += state.0[k2];
        }
        out
    }

    /// Embeds an original state, putting all lenient mass on the primary half.
    pub fn embed(&self, state: &WalkState) -> WalkState {
        let mut v = state.0.clone();
        v.resize(self.kernel.dimension, 0);
        WalkState(v)
    }
}

/// Precomputed threshold tables for sampling successor rules.
pub struct KernelSampler<'a> {
    kernel: &'a TransitionKernel,
    tables: BTreeMap<Face, Vec<(u64, usize)>>,
}

impl KernelSampler<'_> {
    pub fn kernel(&self) -> &TransitionKernel {
        self.kernel
    }

    pub fn sample_rule<R: RngCore>(&self, face: Face, rng: &mut R) -> Option<&Rule> {
        let table = self.tables.get(&face)?;
        let x = rng.next_u64();
        table
            .iter()
            .find(|(threshold, _)| x < *threshold || *threshold == u64::MAX)
            .map(|&(_, k)| &self.kernel.rules[&face][k])
    }

    pub fn step<R: RngCore>(&self, state: &mut WalkState, rng: &mut R) -> Result<()> {
        let face = state.face();
        let rule = self
            .sample_rule(face, rng)
            .ok_or_else(|| Error::DeadFace { face, state: state.clone() })?;
        state.apply_in_place(&rule.delta)
    }
}
