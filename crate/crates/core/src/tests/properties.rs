use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};
use proptest::prelude::*;

use crate::lyapunov::{check_geometric, check_linear, face_drifts, face_ratio, geometric_from_linear, state_ratio};
use crate::machine::{samples, Action, Configuration, CounterMachine, Guard};
use crate::queueing::{queue_simulate, PriorityPolicy, QueueSystem};
use crate::rational::{int, ratio, Prob};
use crate::reduction::{compile_deterministic, compile_extended, default_c, CompiledWalk};
use crate::stationary::{mean_return_exact, propagate, return_time_mc, solve_stationary_exact, DEFAULT_STATE_CAP};
use crate::walk::{Face, TransitionKernel, WalkState};

const ACTIONS: [Action; 5] = [Action::Inc1, Action::Dec1, Action::Inc2, Action::Dec2, Action::Stay];

/// Total machine on `m` states; `picks[k]` chooses next state and action for
/// the k-th `(state, guard)` pair. Disallowed decrements become `Stay`.
fn machine_from(m: usize, halting: usize, picks: &[(usize, usize)]) -> CounterMachine {
    let mut machine = CounterMachine::with_states(m, Configuration::new(halting, 0, 0)).unwrap();
    for s in 0..m {
        for (g, guard) in Guard::ALL.into_iter().enumerate() {
            let (next, a) = picks[s * 4 + g];
            let action = match ACTIONS[a % 5] {
                Action::Dec1 if !guard.b1 => Action::Stay,
                Action::Dec2 if !guard.b2 => Action::Stay,
                other => other,
            };
            machine.add_rule(s, guard, next % m, action).unwrap();
        }
    }
    machine
}

fn arb_machine() -> impl Strategy<Value = CounterMachine> {
    (2usize..=4)
        .prop_flat_map(|m| (Just(m), 0..m, proptest::collection::vec((0usize..4, 0usize..5), m * 4)))
        .prop_map(|(m, h, picks)| machine_from(m, h, &picks))
}

fn arb_p() -> impl Strategy<Value = Prob> {
    (1i64..8, 2i64..9).prop_filter_map("p in (0,1)", |(n, d)| (n < d).then(|| ratio(n, d)))
}

fn up_norm(walk: &CompiledWalk, s: &WalkState) -> u64 {
    s.0[walk.layout.z1()] + s.0[walk.layout.z2()] + s.0[walk.layout.q1()]
}

fn full_norm(walk: &CompiledWalk, s: &WalkState) -> u64 {
    up_norm(walk, s) + walk.layout.q3().map_or(0, |k| s.0[k])
}

/// Successor with the survival bit equal to `survive`, falling back to the
/// unique successor.
fn pick(walk: &CompiledWalk, s: &WalkState, survive: bool) -> Option<WalkState> {
    let succ = walk.kernel.step_distribution(s).unwrap();
    if succ.len() == 1 {
        return Some(succ[0].0.clone());
    }
    succ.into_iter().map(|(t, _)| t).find(|t| (t.0[walk.layout.q2()] == 1) == survive)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_kernels_are_valid(machine in arb_machine(), p in arb_p(), q3 in any::<bool>()) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        let report = walk.kernel.validate();
        prop_assert!(report.is_valid(), "{:?}", report.violations);
        let det = compile_deterministic(&machine).unwrap();
        prop_assert!(det.kernel.validate().is_valid());
        prop_assert!(det.kernel.is_deterministic());
    }

    #[test]
    fn step_masses_sum_to_one_and_stay_in_orthant(machine in arb_machine(), p in arb_p(), seed in any::<u64>()) {
        let walk = compile_extended(&machine, &p, true, None).unwrap();
        for s in walk.kernel.simulate(&walk.origin(), 60, seed).unwrap() {
            let succ = walk.kernel.step_distribution(&s).unwrap();
            let total: Prob = succ.iter().map(|(_, q)| q).sum();
            prop_assert!(total.is_one());
            for (t, _) in &succ {
                prop_assert_eq!(t.dimension(), s.dimension());
            }
        }
    }

    #[test]
    fn propagation_conserves_mass(machine in arb_machine(), p in arb_p(), q3 in any::<bool>()) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        for law in propagate(&walk.kernel, &walk.origin(), 14, DEFAULT_STATE_CAP).unwrap() {
            prop_assert!(law.total().is_one());
            prop_assert!(law.leaked.is_zero());
        }
    }

    #[test]
    fn deterministic_walk_bisimulates(machine in arb_machine()) {
        let det = compile_deterministic(&machine).unwrap();
        prop_assert!(det.bisimulation_check(&machine, machine.halting(), 100).agrees());
    }

    #[test]
    fn extended_walk_bisimulates(machine in arb_machine(), p in arb_p(), q3 in any::<bool>()) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        prop_assert!(walk.bisimulation_check(&machine, 100).agrees());
    }

    #[test]
    fn up_phase_norm_counts_steps(machine in arb_machine(), p in arb_p(), q3 in any::<bool>(), k in 1u64..40) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        let mut s = walk.origin();
        for t in 1..=k {
            match pick(&walk, &s, true) {
                Some(next) if next.0[walk.layout.q2()] == 1 => s = next,
                _ => break,
            }
            prop_assert_eq!(up_norm(&walk, &s), t);
            if let Some(q3) = walk.layout.q3() {
                prop_assert_eq!(s.0[q3], t);
            }
        }
    }

    #[test]
    fn drain_removes_one_unit_per_step(machine in arb_machine(), p in arb_p(), q3 in any::<bool>(), k in 0u64..30) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        let mut s = walk.origin();
        for _ in 0..k {
            match pick(&walk, &s, true) {
                Some(next) if next.0[walk.layout.q2()] == 1 => s = next,
                _ => break,
            }
        }
        s = pick(&walk, &s, false).unwrap();
        prop_assert_eq!(s.0[walk.layout.q2()], 0);
        let mut norm = full_norm(&walk, &s);
        while !s.is_origin() {
            let succ = walk.kernel.step_distribution(&s).unwrap();
            prop_assert_eq!(succ.len(), 1);
            s = succ[0].0.clone();
            prop_assert_eq!(full_norm(&walk, &s) + 1, norm);
            norm -= 1;
        }
        prop_assert_eq!(norm, 0);
    }

    #[test]
    fn certificate_drift_is_exact(machine in arb_machine(), p in arb_p(), extra in 0i64..4) {
        let c = default_c(&p, false) + int(extra);
        let walk = compile_extended(&machine, &p, false, Some(c.clone())).unwrap();
        let w = &walk.certificate.w;
        prop_assert!(check_linear(&walk.kernel, w, &Prob::one()).unwrap().passed());
        let q2 = walk.layout.q2();
        let mpart = Face((1u64 << walk.layout.machine_part()) - 1);
        for (face, drift) in face_drifts(&walk.kernel, w).unwrap() {
            if face.contains(q2) && face.0 & mpart.0 != 0 {
                prop_assert_eq!(drift, Prob::one() - &c * (Prob::one() - &p));
            }
        }
    }

    #[test]
    fn small_weight_fails(machine in arb_machine(), p in arb_p().prop_filter("p <= 1/2", |p| *p <= ratio(1, 2))) {
        let c = (Prob::one() / (Prob::one() - &p)) * ratio(9, 10);
        let walk = compile_extended(&machine, &p, false, Some(c)).unwrap();
        prop_assert!(!check_linear(&walk.kernel, &walk.certificate.w, &Prob::one()).unwrap().passed());
    }

    #[test]
    fn geometric_certificate_reverifies(machine in arb_machine(), p in arb_p(), q3 in any::<bool>(), seed in any::<u64>()) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        let cert = geometric_from_linear(&walk.kernel, &walk.certificate.w, &walk.certificate.exception_set).unwrap();
        prop_assert!(cert.gamma_g < 1.0);
        prop_assert!(check_geometric(&walk.kernel, &cert).unwrap().passed());
        let log_phi = |s: &WalkState| cert.log_phi(s);
        for s in walk.kernel.simulate(&walk.origin(), 40, seed).unwrap() {
            let rules = walk.kernel.rules_for(s.face()).unwrap();
            let sampled = state_ratio(&walk.kernel, &log_phi, &s).unwrap();
            let closed = face_ratio(rules, &cert.w, cert.delta);
            prop_assert!((sampled - closed).abs() <= 1e-12 * closed.max(1.0));
        }
    }

    #[test]
    fn split_kernel_has_the_same_law(machine in arb_machine(), p in arb_p(), q3 in any::<bool>()) {
        let walk = compile_extended(&machine, &p, q3, None).unwrap();
        let split = walk.kernel.split_pm2().unwrap();
        prop_assert!(split.kernel.lenient().is_empty());
        prop_assert!(split.kernel.validate().is_valid());
        let original = propagate(&walk.kernel, &walk.origin(), 12, DEFAULT_STATE_CAP).unwrap();
        let lifted = propagate(&split.kernel, &split.embed(&walk.origin()), 12, DEFAULT_STATE_CAP).unwrap();
        for (a, b) in original.iter().zip(&lifted) {
            let mut merged: BTreeMap<WalkState, Prob> = BTreeMap::new();
            for (s, m) in &b.mass {
                *merged.entry(split.merge(s)).or_insert_with(Prob::zero) += m;
            }
            prop_assert_eq!(&a.mass, &merged);
        }
    }

    #[test]
    fn kac_identity_on_random_finite_kernels(d in 1usize..=3, picks in proptest::collection::vec((1i64..6, 0u64..8), 32)) {
        let kernel = finite_kernel(d, &picks);
        prop_assert!(kernel.validate().is_valid());
        let origin = WalkState::origin(d);
        let pi = solve_stationary_exact(&kernel, &origin, 1000).unwrap();
        let mean = mean_return_exact(&kernel, &origin, 1000).unwrap();
        prop_assert!((&pi[&origin] * mean).is_one());
        prop_assert!(pi.values().sum::<Prob>().is_one());
    }

    #[test]
    fn order_policy_matches_its_table(perm in Just((1..=5usize).collect::<Vec<_>>()).prop_shuffle()) {
        let system = QueueSystem::new(vec![2, 3], 2, vec![ratio(1, 3), ratio(1, 5)]).unwrap();
        let policy = PriorityPolicy::from_order(&system, perm.clone()).unwrap();
        let rebuilt = PriorityPolicy::from_table(&system, policy.table().to_vec()).unwrap();
        prop_assert_eq!(rebuilt.table(), policy.table());
        for bits in 0..32usize {
            let expected = perm.iter().copied().find(|&k| bits & (1 << (k - 1)) != 0).unwrap_or(0);
            prop_assert_eq!(policy.serve(bits), expected);
        }
    }

    #[test]
    fn queue_conserves_parts(visits in proptest::collection::vec(1u32..4, 1..3), slot in 1u32..4, num in 0i64..5, seed in any::<u64>()) {
        let probs = vec![ratio(num, 4); visits.len()];
        let system = QueueSystem::new(visits, slot, probs).unwrap();
        let n = system.buffers();
        let policy = PriorityPolicy::from_order(&system, (1..=n).rev().collect()).unwrap();
        let stats = queue_simulate(&system, &policy, 2000, seed, 0).unwrap();
        prop_assert!(stats.departures <= stats.arrivals);
        prop_assert!(stats.mean_occupancy.iter().all(|&x| x >= 0.0));
    }
}

/// Random kernel on `{0,1}^d`: off the face moves are `0/+1`, on the face
/// `0/−1`, and every nonempty face can return to the origin in one step.
fn finite_kernel(d: usize, picks: &[(i64, u64)]) -> TransitionKernel {
    let mut kernel = TransitionKernel::new(d).unwrap();
    let mut it = picks.iter().cycle();
    for bits in 0..1u64 << d {
        let face = Face(bits);
        let home: Vec<i8> = (0..d).map(|i| if face.contains(i) { -1 } else { 0 }).collect();
        let (w1, pattern) = *it.next().unwrap();
        let (w2, _) = *it.next().unwrap();
        let other: Vec<i8> = (0..d)
            .map(|i| match (face.contains(i), pattern & (1 << i) != 0) {
                (true, true) => -1,
                (false, true) => 1,
                _ => 0,
            })
            .collect();
        let mut rules: BTreeMap<Vec<i8>, Prob> = BTreeMap::new();
        let total = int(w1 + w2);
        *rules.entry(home).or_insert_with(Prob::zero) += int(w1) / &total;
        *rules.entry(other).or_insert_with(Prob::zero) += int(w2) / &total;
        for (delta, prob) in rules {
            kernel.add_rule(face, delta, prob).unwrap();
        }
    }
    kernel
}

#[test]
fn hand_built_machines_bisimulate_for_100_steps() {
    for machine in [samples::halt_in_two(), samples::count_forever(), samples::shuttle(3)] {
        let det = compile_deterministic(&machine).unwrap();
        let report = det.bisimulation_check(&machine, machine.halting(), 100);
        assert!(report.agrees());
        assert_eq!(report.steps_checked, 100);
    }
}

#[test]
fn monte_carlo_means_are_within_four_standard_errors() {
    let walk = compile_extended(&samples::halt_in_two(), &ratio(1, 2), false, None).unwrap();
    let hits = (0..20u64)
        .filter(|&seed| {
            let s = return_time_mc(&walk.kernel, &walk.origin(), 20_000, seed, 1_000).unwrap();
            (s.mean - 3.5).abs() < 4.0 * s.std_error
        })
        .count();
    assert!(hits >= 19, "{hits}/20 seeds within 4 standard errors");
}
