//! Linear and geometric Foster–Lyapunov drift checks.
//!
//! For `Φ(q) = w·q` the one-step drift only depends on the face of `q`, and
//! for `Φ_g(q) = exp(δ w·q)` so does the ratio `E[Φ_g(next)] / Φ_g(q)`. Both
//! checks therefore run over the materialized faces of the kernel.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::rational::{self, Prob};
use crate::walk::{Face, Rule, TransitionKernel, WalkState};
use crate::{Error, Result};

const DELTA_HI: f64 = 10.0;
const SEARCH_ITERATIONS: usize = 60;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinearCheck {
    Pass,
    /// Worst face and its drift.
    Fail { face: Face, drift: Prob },
}

impl LinearCheck {
    pub fn passed(&self) -> bool {
        matches!(self, LinearCheck::Pass)
    }
}

fn check_weights(kernel: &TransitionKernel, w: &[Prob]) -> Result<()> {
    if w.len() != kernel.dimension() {
        return Err(Error::DimensionMismatch { expected: kernel.dimension(), found: w.len() });
    }
    if w.iter().any(Signed::is_negative) {
        return Err(Error::Parameter("weights must be nonnegative".into()));
    }
    Ok(())
}

fn dot(w: &[Prob], delta: &[i8]) -> Prob {
    w.iter().zip(delta).filter(|(_, &d)| d != 0).map(|(wi, &d)| wi * rational::int(i64::from(d))).sum()
}

/// `Σ_Δ (w·Δ) p(Λ,Δ)` for every nonempty materialized face.
pub fn face_drifts(kernel: &TransitionKernel, w: &[Prob]) -> Result<Vec<(Face, Prob)>> {
    check_weights(kernel, w)?;
    Ok(kernel
        .faces()
        .filter(|(face, rules)| !face.is_empty() && !rules.is_empty())
        .map(|(face, rules)| (face, rules.iter().map(|r| dot(w, &r.delta) * &r.prob).sum()))
        .collect())
}

pub fn check_linear(kernel: &TransitionKernel, w: &[Prob], gamma: &Prob) -> Result<LinearCheck> {
    let bound = -gamma.clone();
    let worst = face_drifts(kernel, w)?.into_iter().max_by(|a, b| a.1.cmp(&b.1));
    Ok(match worst {
        Some((face, drift)) if drift > bound => LinearCheck::Fail { face, drift },
        _ => LinearCheck::Pass,
    })
}

/// `Φ_g(q) = exp(δ w·q)` with contraction `gamma_g` off the exception set.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricCertificate {
    pub delta: f64,
    pub w: Vec<f64>,
    pub gamma_g: f64,
    pub exception_set: Vec<WalkState>,
    /// `max_{x∈B} E[Φ_g(next) | x]`.
    pub b_max: f64,
}

impl GeometricCertificate {
    pub fn log_phi(&self, q: &WalkState) -> f64 {
        self.delta * self.w.iter().zip(&q.0).map(|(w, &x)| w * x as f64).sum::<f64>()
    }

    pub fn phi(&self, q: &WalkState) -> f64 {
        libm::exp(self.log_phi(q))
    }

    /// Certificate for the lazy kernel `(I + P) / 2`, whose face ratios are
    /// `(1 + r) / 2`.
    pub fn lazy(&self) -> GeometricCertificate {
        let b_max = self.exception_set.iter().map(|x| 0.5 * (self.phi(x) + self.b_max)).fold(f64::NEG_INFINITY, f64::max);
        GeometricCertificate { gamma_g: 0.5 * (1.0 + self.gamma_g), b_max, ..self.clone() }
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(terms.iter().map(|t| libm::exp(t - m)).sum::<f64>())
}

/// `log Σ_Δ p(Λ,Δ) exp(δ w·Δ)`.
fn log_face_ratio(rules: &[Rule], w: &[f64], delta: f64) -> f64 {
    log_sum_exp(rules.iter().filter(|r| r.prob.is_positive()).map(|r| {
        let wd: f64 = w.iter().zip(&r.delta).map(|(wi, &d)| wi * f64::from(d)).sum();
        libm::log(rational::to_f64(&r.prob)) + delta * wd
    }))
}

pub fn face_ratio(rules: &[Rule], w: &[f64], delta: f64) -> f64 {
    libm::exp(log_face_ratio(rules, w, delta))
}

/// Faces that must contract: all materialized faces except `∅` when the
/// origin is exempt.
fn checked_faces<'a>(
    kernel: &'a TransitionKernel,
    exception_set: &'a [WalkState],
) -> impl Iterator<Item = (Face, &'a [Rule])> + 'a {
    let origin_exempt = exception_set.iter().any(WalkState::is_origin);
    kernel.faces().filter(move |(face, rules)| !rules.is_empty() && !(face.is_empty() && origin_exempt))
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometricCheck {
    Pass,
    Fail { face: Face, ratio: f64 },
    FailState { state: WalkState, ratio: f64 },
}

impl GeometricCheck {
    pub fn passed(&self) -> bool {
        matches!(self, GeometricCheck::Pass)
    }
}

/// Face-wise closed form.
pub fn check_geometric(kernel: &TransitionKernel, cert: &GeometricCertificate) -> Result<GeometricCheck> {
    if cert.w.len() != kernel.dimension() {
        return Err(Error::DimensionMismatch { expected: kernel.dimension(), found: cert.w.len() });
    }
    let worst = checked_faces(kernel, &cert.exception_set)
        .map(|(face, rules)| (face, face_ratio(rules, &cert.w, cert.delta)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    Ok(match worst {
        Some((face, ratio)) if !(ratio <= cert.gamma_g) => GeometricCheck::Fail { face, ratio },
        _ => GeometricCheck::Pass,
    })
}

/// `E[Φ(next) | q] / Φ(q)` for an arbitrary positive `Φ` given in log form.
pub fn state_ratio(kernel: &TransitionKernel, log_phi: &dyn Fn(&WalkState) -> f64, q: &WalkState) -> Result<f64> {
    let succ = kernel.step_distribution(q)?;
    let log_e = log_sum_exp(succ.iter().map(|(s, p)| libm::log(rational::to_f64(p)) + log_phi(s)));
    Ok(libm::exp(log_e - log_phi(q)))
}

/// Per-state check over a finite sample, for any `Φ` with `Φ ≥ 1`.
pub fn check_geometric_states(
    kernel: &TransitionKernel,
    log_phi: &dyn Fn(&WalkState) -> f64,
    gamma_g: f64,
    exception_set: &[WalkState],
    states: &[WalkState],
) -> Result<GeometricCheck> {
    let mut worst: Option<(WalkState, f64)> = None;
    for q in states.iter().filter(|q| !exception_set.contains(q)) {
        let r = state_ratio(kernel, log_phi, q)?;
        if worst.as_ref().is_none_or(|(_, w)| r > *w) {
            worst = Some((q.clone(), r));
        }
    }
    Ok(match worst {
        Some((state, ratio)) if !(ratio <= gamma_g) => GeometricCheck::FailState { state, ratio },
        _ => GeometricCheck::Pass,
    })
}

fn max_log_ratio(kernel: &TransitionKernel, w: &[f64], exception_set: &[WalkState], delta: f64) -> (Face, f64) {
    checked_faces(kernel, exception_set)
        .map(|(face, rules)| (face, log_face_ratio(rules, w, delta)))
        .fold((Face::EMPTY, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Finds `δ` in `(0, 10]` minimising the worst face ratio.
///
/// The worst ratio is a maximum of convex functions of `δ`, hence convex, and
/// the search narrows a bracket around its minimiser.
pub fn geometric_from_linear(
    kernel: &TransitionKernel,
    w: &[Prob],
    exception_set: &[WalkState],
) -> Result<GeometricCertificate> {
    check_weights(kernel, w)?;
    let wf: Vec<f64> = w.iter().map(rational::to_f64).collect();
    let g = |d: f64| max_log_ratio(kernel, &wf, exception_set, d).1;
    let (mut lo, mut hi) = (0.0f64, DELTA_HI);
    for _ in 0..SEARCH_ITERATIONS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        // ties move toward the smaller delta
        if g(m1) <= g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let delta = 0.5 * (lo + hi);
    let (face, log_ratio) = max_log_ratio(kernel, &wf, exception_set, delta);
    let gamma_g = libm::exp(log_ratio);
    if !(gamma_g < 1.0) || delta <= 0.0 {
        let (face, ratio) = (face, libm::exp(max_log_ratio(kernel, &wf, exception_set, DELTA_HI).1).min(gamma_g));
        return Err(Error::NoContractingDelta { delta_hi: DELTA_HI, face, ratio });
    }
    let mut cert = GeometricCertificate { delta, w: wf, gamma_g, exception_set: exception_set.to_vec(), b_max: 0.0 };
    cert.b_max = b_max(kernel, &cert)?;
    Ok(cert)
}

/// `max_{x∈B} E[Φ_g(next) | x]`.
pub fn b_max(kernel: &TransitionKernel, cert: &GeometricCertificate) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for x in &cert.exception_set {
        let log_phi = |s: &WalkState| cert.log_phi(s);
        let ratio = state_ratio(kernel, &log_phi, x)?;
        best = best.max(ratio * cert.phi(x));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingInputs {
    /// `exp(δ · max_Δ w·Δ)`.
    pub nu: f64,
    /// `min_{x,y∈B} p(x,y)`.
    pub p_b_min: Prob,
    pub gamma_g: f64,
    pub b_max: f64,
    pub warning: Option<String>,
}

pub fn mixing_inputs(kernel: &TransitionKernel, cert: &GeometricCertificate) -> Result<MixingInputs> {
    if cert.w.len() != kernel.dimension() {
        return Err(Error::DimensionMismatch { expected: kernel.dimension(), found: cert.w.len() });
    }
    let max_jump = kernel
        .faces()
        .flat_map(|(_, rules)| rules.iter())
        .filter(|r| r.prob.is_positive())
        .map(|r| cert.w.iter().zip(&r.delta).map(|(w, &d)| w * f64::from(d)).sum::<f64>())
        .fold(0.0f64, f64::max);
    let nu = libm::exp(cert.delta * max_jump);

    let mut p_b_min: Option<Prob> = None;
    for x in &cert.exception_set {
        let succ = kernel.step_distribution(x)?;
        for y in &cert.exception_set {
            let p: Prob = succ.iter().filter(|(s, _)| s == y).map(|(_, p)| p).sum();
            if p_b_min.as_ref().is_none_or(|m| p < *m) {
                p_b_min = Some(p);
            }
        }
    }
    let p_b_min = p_b_min.unwrap_or_else(Prob::zero);
    let warning = p_b_min
        .is_zero()
        .then(|| String::from("p_B_min = 0: the exception set has a pair with no one-step transition; the mixing bound is vacuous"));
    Ok(MixingInputs { nu, p_b_min, gamma_g: cert.gamma_g, b_max: b_max(kernel, cert)?, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::samples;
    use crate::rational::{int, ratio};
    use crate::reduction::compile_extended;
    use crate::walk::tests::birth_death;
    use alloc::vec;

    fn bd_cert(delta: f64, gamma_g: f64) -> GeometricCertificate {
        GeometricCertificate { delta, w: vec![1.0], gamma_g, exception_set: vec![WalkState::origin(1)], b_max: 0.0 }
    }

    #[test]
    fn birth_death_linear() {
        let k = birth_death();
        assert_eq!(check_linear(&k, &[int(1)], &int(1)).unwrap(), LinearCheck::Pass);
        let mut up = TransitionKernel::new(1).unwrap();
        up.add_rule(Face::from_indices([0]), vec![1], int(1)).unwrap();
        up.add_rule(Face::EMPTY, vec![1], int(1)).unwrap();
        assert_eq!(
            check_linear(&up, &[int(1)], &int(1)).unwrap(),
            LinearCheck::Fail { face: Face::from_indices([0]), drift: int(1) }
        );
    }

    #[test]
    fn linear_dimension_mismatch() {
        assert!(matches!(check_linear(&birth_death(), &[int(1), int(1)], &int(1)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn birth_death_geometric() {
        let k = birth_death();
        assert!(check_geometric(&k, &bd_cert(1.0, 0.5)).unwrap().passed());
        match check_geometric(&k, &bd_cert(1.0, 0.3)).unwrap() {
            GeometricCheck::Fail { face, ratio } => {
                assert_eq!(face, Face::from_indices([0]));
                assert!((ratio - libm::exp(-1.0)).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(!check_geometric(&k, &bd_cert(0.0, 0.99)).unwrap().passed());
    }

    #[test]
    fn sampled_and_face_paths_agree() {
        let k = birth_death();
        let cert = bd_cert(0.7, 0.9);
        let log_phi = |q: &WalkState| cert.log_phi(q);
        for x in 1..20u64 {
            let q = WalkState(vec![x]);
            let r = state_ratio(&k, &log_phi, &q).unwrap();
            assert!((r - face_ratio(k.rules_for(q.face()).unwrap(), &cert.w, cert.delta)).abs() < 1e-12);
        }
    }

    #[test]
    fn from_linear_birth_death() {
        let cert = geometric_from_linear(&birth_death(), &[int(1)], &[WalkState::origin(1)]).unwrap();
        assert!(cert.delta > 0.0 && cert.gamma_g < 1.0);
        assert!(check_geometric(&birth_death(), &cert).unwrap().passed());
    }

    #[test]
    fn from_linear_rejects_flat_kernel() {
        let mut k = TransitionKernel::new(1).unwrap();
        k.add_rule(Face::from_indices([0]), vec![0], int(1)).unwrap();
        k.add_rule(Face::EMPTY, vec![1], int(1)).unwrap();
        let err = geometric_from_linear(&k, &[int(1)], &[WalkState::origin(1)]).unwrap_err();
        assert!(matches!(err, Error::NoContractingDelta { .. }));
    }

    #[test]
    fn compiled_certificate_passes() {
        let walk = compile_extended(&samples::count_forever(), &ratio(1, 2), false, None).unwrap();
        let c = &walk.certificate;
        assert!(check_linear(&walk.kernel, &c.w, &c.gamma).unwrap().passed());
        let cert = geometric_from_linear(&walk.kernel, &c.w, &c.exception_set).unwrap();
        assert!(cert.gamma_g < 1.0);
        assert!(check_geometric(&walk.kernel, &cert).unwrap().passed());
    }

    #[test]
    fn mixing_inputs_birth_death() {
        let k = birth_death();
        let mi = mixing_inputs(&k, &bd_cert(1.0, 0.5)).unwrap();
        assert!((mi.nu - core::f64::consts::E).abs() < 1e-12);
        assert!(mi.p_b_min.is_zero());
        assert!(mi.warning.is_some());

        let mut split = TransitionKernel::new(1).unwrap();
        split.add_rule(Face::from_indices([0]), vec![-1], int(1)).unwrap();
        split.add_rule(Face::EMPTY, vec![1], ratio(1, 2)).unwrap();
        split.add_rule(Face::EMPTY, vec![0], ratio(1, 2)).unwrap();
        let mi = mixing_inputs(&split, &bd_cert(1.0, 0.5)).unwrap();
        assert_eq!(mi.p_b_min, ratio(1, 2));
        assert!(mi.warning.is_none());

        let mi = mixing_inputs(&k, &bd_cert(1e-9, 0.5)).unwrap();
        assert!((mi.nu - 1.0).abs() < 1e-8);
    }
}
