//! JSON file formats.
//!
//! Probabilities and weights are exact rationals written as `"n/d"` (or
//! `"n"`). Face and coordinate indices are 1-based.

use std::collections::BTreeMap;
use std::path::Path;

use orthwalk_core::machine::{Action, Configuration, CounterMachine, Guard};
use orthwalk_core::lyapunov::GeometricCertificate;
use orthwalk_core::queueing::{PriorityPolicy, QueueSystem};
use orthwalk_core::reduction::{Layout, LinearCertificate};
use orthwalk_core::{parse_rational, Face, Prob, Rule, TransitionKernel, WalkState};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] orthwalk_core::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn invalid(msg: impl Into<String>) -> FormatError {
    FormatError::Invalid(msg.into())
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn rational(text: &str) -> Result<Prob> {
    parse_rational(text.trim()).map_err(|e| invalid(e.to_string()))
}

pub fn rational_string(x: &Prob) -> String {
    x.to_string()
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_default();
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lenient: Vec<usize>,
    pub faces: Vec<FaceEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceEntry {
    pub face: Vec<usize>,
    pub rules: Vec<RuleEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleEntry {
    pub delta: Vec<i8>,
    pub prob: String,
}

fn face_from_one_based(indices: &[usize], d: usize) -> Result<Face> {
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > d) {
        return Err(invalid(format!("coordinate {bad} outside 1..={d}")));
    }
    Ok(Face::from_indices(indices.iter().map(|i| i - 1)))
}

pub fn kernel_to_json(kernel: &TransitionKernel) -> String {
    let file = KernelFile {
        dimension: kernel.dimension(),
        lenient: kernel.lenient().indices().map(|i| i + 1).collect(),
        faces: kernel
            .faces()
            .map(|(face, rules)| FaceEntry {
                face: face.indices().map(|i| i + 1).collect(),
                rules: rules.iter().map(|r| RuleEntry { delta: r.delta.clone(), prob: rational_string(&r.prob) }).collect(),
            })
            .collect(),
    };
    to_json(&file)
}

/// Parses a kernel. Structural checks (probabilities, step sizes, face mass)
/// are left to [`TransitionKernel::validate`].
pub fn kernel_from_json(text: &str) -> Result<TransitionKernel> {
    let file: KernelFile = serde_json::from_str(text)?;
    let d = file.dimension;
    let mut kernel = TransitionKernel::new(d)?;
    kernel.set_lenient(face_from_one_based(&file.lenient, d)?);
    for entry in file.faces {
        let face = face_from_one_based(&entry.face, d)?;
        if kernel.rules_for(face).is_some() {
            return Err(invalid(format!("face {face} listed twice")));
        }
        let rules = entry
            .rules
            .into_iter()
            .map(|r| Ok(Rule { delta: r.delta, prob: rational(&r.prob)? }))
            .collect::<Result<Vec<_>>>()?;
        kernel.set_face_rules(face, rules);
    }
    Ok(kernel)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineFile {
    pub states: Vec<String>,
    pub halting: HaltingEntry,
    pub rules: Vec<MachineRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaltingEntry {
    pub state: String,
    #[serde(default)]
    pub z1: u64,
    #[serde(default)]
    pub z2: u64,
}

/// `(state, guard) → (next, action)`; guard is `[b1, b2]` with entries 0/1,
/// action is `±1` (counter 1), `±2` (counter 2) or `0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineRule {
    pub state: String,
    pub guard: [u8; 2],
    pub next: String,
    pub action: i8,
}

pub fn machine_file(machine: &CounterMachine) -> MachineFile {
    let names = machine.names();
    let h = machine.halting();
    MachineFile {
        states: names.to_vec(),
        halting: HaltingEntry { state: names[h.state].clone(), z1: h.z1, z2: h.z2 },
        rules: machine
            .rules()
            .map(|(s, g, t)| MachineRule {
                state: names[s].clone(),
                guard: [u8::from(g.b1), u8::from(g.b2)],
                next: names[t.next].clone(),
                action: t.action.code(),
            })
            .collect(),
    }
}

pub fn machine_to_json(machine: &CounterMachine) -> String {
    to_json(&machine_file(machine))
}

pub fn machine_from_file(file: &MachineFile) -> Result<CounterMachine> {
    let index = |name: &str| -> Result<usize> {
        file.states.iter().position(|s| s == name).ok_or_else(|| invalid(format!("unknown state {name:?}")))
    };
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = file.states.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(invalid(format!("state {dup:?} declared twice")));
    }
    let halting = Configuration::new(index(&file.halting.state)?, file.halting.z1, file.halting.z2);
    let mut machine = CounterMachine::new(file.states.clone(), halting)?;
    for r in &file.rules {
        if r.guard.iter().any(|&b| b > 1) {
            return Err(invalid(format!("guard entries must be 0 or 1 in rule for {:?}", r.state)));
        }
        let guard = Guard::new(r.guard[0] == 1, r.guard[1] == 1);
        machine.add_rule(index(&r.state)?, guard, index(&r.next)?, Action::from_code(r.action)?)?;
    }
    Ok(machine)
}

pub fn machine_from_json(text: &str) -> Result<CounterMachine> {
    machine_from_file(&serde_json::from_str(text)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpecFile {
    pub types: usize,
    pub visits: Vec<u32>,
    pub slot: u32,
    pub arrival_probs: Vec<String>,
    pub policy: PolicyEntry,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_order: Option<Vec<usize>>,
}

pub fn queue_from_json(text: &str) -> Result<(QueueSystem, PriorityPolicy)> {
    let file: QueueSpecFile = serde_json::from_str(text)?;
    if file.types != file.visits.len() {
        return Err(invalid(format!("types = {} but {} visit counts given", file.types, file.visits.len())));
    }
    let probs = file.arrival_probs.iter().map(|p| rational(p)).collect::<Result<Vec<_>>>()?;
    let system = QueueSystem::new(file.visits, file.slot, probs)?;
    let policy = match (file.policy.table, file.policy.priority_order) {
        (Some(table), None) => PriorityPolicy::from_table(&system, table)?,
        (None, Some(order)) => PriorityPolicy::from_order(&system, order)?,
        _ => return Err(invalid("policy needs exactly one of `table` or `priority_order`")),
    };
    Ok((system, policy))
}

pub fn queue_to_json(system: &QueueSystem, policy: &PriorityPolicy) -> String {
    let policy = match policy.order() {
        Some(order) => PolicyEntry { table: None, priority_order: Some(order.to_vec()) },
        None => PolicyEntry { table: Some(policy.table().to_vec()), priority_order: None },
    };
    to_json(&QueueSpecFile {
        types: system.types(),
        visits: system.visits().to_vec(),
        slot: system.slot(),
        arrival_probs: system.arrival_probs().iter().map(rational_string).collect(),
        policy,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCertFile {
    pub w: Vec<String>,
    pub gamma: String,
    pub exception_set: Vec<Vec<u64>>,
}

pub fn linear_cert_to_json(cert: &LinearCertificate) -> String {
    to_json(&LinearCertFile {
        w: cert.w.iter().map(rational_string).collect(),
        gamma: rational_string(&cert.gamma),
        exception_set: cert.exception_set.iter().map(|s| s.0.clone()).collect(),
    })
}

pub fn linear_cert_from_json(text: &str) -> Result<LinearCertificate> {
    let file: LinearCertFile = serde_json::from_str(text)?;
    Ok(LinearCertificate {
        w: file.w.iter().map(|x| rational(x)).collect::<Result<_>>()?,
        gamma: rational(&file.gamma)?,
        exception_set: file.exception_set.into_iter().map(WalkState).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricCertFile {
    pub delta: f64,
    pub w: Vec<f64>,
    pub gamma_g: f64,
    pub exception_set: Vec<Vec<u64>>,
    pub b_max: f64,
}

pub fn geometric_cert_to_json(cert: &GeometricCertificate) -> String {
    to_json(&GeometricCertFile {
        delta: cert.delta,
        w: cert.w.clone(),
        gamma_g: cert.gamma_g,
        exception_set: cert.exception_set.iter().map(|s| s.0.clone()).collect(),
        b_max: cert.b_max,
    })
}

pub fn geometric_cert_from_json(text: &str) -> Result<GeometricCertificate> {
    let f: GeometricCertFile = serde_json::from_str(text)?;
    if f.delta.is_nan() || f.delta < 0.0 || f.w.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(invalid("delta and weights must be nonnegative"));
    }
    Ok(GeometricCertificate {
        delta: f.delta,
        w: f.w,
        gamma_g: f.gamma_g,
        exception_set: f.exception_set.into_iter().map(WalkState).collect(),
        b_max: f.b_max,
    })
}

/// Sidecar written next to a compiled kernel, enough to rebuild it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileMeta {
    pub machine: MachineFile,
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
    #[serde(default)]
    pub with_q3: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    #[serde(default)]
    pub strict: bool,
    /// 1-based coordinate roles.
    pub layout: BTreeMap<String, Vec<usize>>,
}

pub fn layout_map(layout: &Layout) -> BTreeMap<String, Vec<usize>> {
    let mut m = BTreeMap::new();
    m.insert("state_units".into(), (1..layout.states).map(|i| layout.state_unit(i) + 1).collect());
    m.insert("z1".into(), vec![layout.z1() + 1]);
    m.insert("z2".into(), vec![layout.z2() + 1]);
    if layout.extended {
        m.insert("q1".into(), vec![layout.q1() + 1]);
        m.insert("q2".into(), vec![layout.q2() + 1]);
        if let Some(q3) = layout.q3() {
            m.insert("q3".into(), vec![q3 + 1]);
        }
    }
    m
}

pub fn meta_to_json(meta: &CompileMeta) -> String {
    to_json(meta)
}

pub fn meta_from_json(text: &str) -> Result<CompileMeta> {
    Ok(serde_json::from_str(text)?)
}

/// Comma/whitespace separated rationals.
pub fn rational_vector(text: &str) -> Result<Vec<Prob>> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(rational).collect()
}

/// `origin` or comma separated nonnegative integers.
pub fn state(text: &str, dimension: usize) -> Result<WalkState> {
    let text = text.trim();
    if text == "origin" {
        return Ok(WalkState::origin(dimension));
    }
    let v = text
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| invalid(format!("bad coordinate {t:?} in state {text:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != dimension {
        return Err(FormatError::Core(orthwalk_core::Error::DimensionMismatch { expected: dimension, found: v.len() }));
    }
    Ok(WalkState(v))
}

/// States separated by `;`.
pub fn states(text: &str, dimension: usize) -> Result<Vec<WalkState>> {
    text.split(';').filter(|t| !t.trim().is_empty()).map(|t| state(t, dimension)).collect()
}

pub fn state_string(s: &WalkState) -> String {
    s.0.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthwalk_core::machine::samples;
    use orthwalk_core::rational::ratio;
    use orthwalk_core::reduction::compile_extended;

    #[test]
    fn kernel_round_trip_is_bit_exact() {
        let walk = compile_extended(&samples::shuttle(1), &ratio(1, 3), true, None).unwrap();
        let text = kernel_to_json(&walk.kernel);
        let back = kernel_from_json(&text).unwrap();
        assert_eq!(back, walk.kernel);
        assert_eq!(kernel_to_json(&back), text);
    }

    #[test]
    fn machine_round_trip() {
        for m in [samples::halt_in_two(), samples::count_forever(), samples::shuttle(2)] {
            let text = machine_to_json(&m);
            let back = machine_from_json(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(machine_to_json(&back), text);
        }
    }

    #[test]
    fn malformed_decrement_is_rejected() {
        let text = r#"{"states":["a","b"],"halting":{"state":"a"},"rules":[{"state":"a","guard":[0,0],"next":"b","action":-1}]}"#;
        assert!(matches!(machine_from_json(text), Err(FormatError::Core(orthwalk_core::Error::MachineDefinition(_)))));
    }

    #[test]
    fn queue_spec_round_trip() {
        let text = r#"{"types":2,"visits":[2,3],"slot":1,"arrival_probs":["1/2","1/5"],"policy":{"priority_order":[5,4,3,2,1]}}"#;
        let (s, p) = queue_from_json(text).unwrap();
        let out = queue_to_json(&s, &p);
        let (s2, p2) = queue_from_json(&out).unwrap();
        assert_eq!((s2, p2), (s, p));
    }

    #[test]
    fn states_parse() {
        assert_eq!(state("origin", 3).unwrap(), WalkState(vec![0, 0, 0]));
        assert_eq!(state("1,0,2", 3).unwrap(), WalkState(vec![1, 0, 2]));
        assert!(state("1,0", 3).is_err());
        assert_eq!(states("origin;1,1", 2).unwrap().len(), 2);
    }

    #[test]
    fn decimals_are_rejected() {
        assert!(rational_vector("1, 0.5").is_err());
        assert_eq!(rational_vector("1 2/3,0").unwrap(), vec![ratio(1, 1), ratio(2, 3), ratio(0, 1)]);
    }
}
