use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::machine::{samples, Configuration, RunOutcome};
use crate::queueing::{embedded_chain, load_factor, queue_simulate, PriorityPolicy, QueueSystem};
use crate::rational::{int, pow, ratio, Prob};
use crate::reduction::compile_extended;
use crate::stationary::{
    conditional_cycles, ldrate_compiled, mean_return_exact, propagate, return_time_compiled, return_time_exact,
    solve_stationary_exact, DEFAULT_STATE_CAP,
};
use crate::walk::WalkState;

const CAP: usize = DEFAULT_STATE_CAP;

fn halting_time(machine: &crate::machine::CounterMachine) -> u64 {
    match machine.run(machine.halting(), 10_000).unwrap() {
        RunOutcome::Halted(t) => t,
        RunOutcome::Running(_) => panic!("machine does not halt"),
    }
}

/// `P(R = 2t+2) = (1−p)p^t` for `t < T` and `p^T` at `2T+2`.
fn halting_return_law(p: &Prob, t_halt: u64) -> Vec<(u64, Prob)> {
    let mut law: Vec<(u64, Prob)> =
        (0..t_halt).map(|t| (2 * t + 2, (Prob::one() - p) * pow(p, t as u32))).collect();
    law.push((2 * t_halt + 2, pow(p, t_halt as u32)));
    law
}

#[test]
fn halting_machines_follow_the_truncated_geometric_law() {
    for machine in [samples::halt_in_two(), samples::shuttle(1)] {
        let t_halt = halting_time(&machine);
        for p in [ratio(1, 4), ratio(1, 2), ratio(3, 4)] {
            let walk = compile_extended(&machine, &p, false, None).unwrap();
            let report = return_time_exact(&walk.kernel, &walk.origin(), 2 * t_halt + 10, CAP).unwrap();
            assert_eq!(report.pmf_prefix, halting_return_law(&p, t_halt));
            let mean = (int(2) - int(2) * pow(&p, t_halt as u32 + 1)) / (Prob::one() - &p);
            assert_eq!(report.mean_exact, Some(mean.clone()));
            let pi = solve_stationary_exact(&walk.kernel, &walk.origin(), CAP).unwrap();
            assert_eq!(pi[&walk.origin()], Prob::one() / &mean);
            assert_eq!(mean_return_exact(&walk.kernel, &walk.origin(), CAP).unwrap(), mean);
        }
    }
}

#[test]
fn halt_in_two_examples() {
    let walk = compile_extended(&samples::halt_in_two(), &ratio(1, 2), false, None).unwrap();
    let report = return_time_exact(&walk.kernel, &walk.origin(), 20, CAP).unwrap();
    assert_eq!(report.pmf_prefix, vec![(2, ratio(1, 2)), (4, ratio(1, 4)), (6, ratio(1, 4))]);
    assert_eq!(report.mean_exact, Some(ratio(7, 2)));
    let walk = compile_extended(&samples::halt_in_two(), &ratio(1, 4), false, None).unwrap();
    let pi = solve_stationary_exact(&walk.kernel, &walk.origin(), CAP).unwrap();
    assert_eq!(pi[&walk.origin()], ratio(24, 63));
}

#[test]
fn running_machine_returns_at_even_times() {
    for p in [ratio(1, 4), ratio(1, 2), ratio(3, 4)] {
        let walk = compile_extended(&samples::count_forever(), &p, false, None).unwrap();
        let report = return_time_compiled(&walk, 30, 20, 10_000).unwrap();
        let expected: Vec<(u64, Prob)> =
            (0..15u32).map(|t| (2 * u64::from(t) + 2, (Prob::one() - &p) * pow(&p, t))).collect();
        assert_eq!(report.pmf_prefix, expected);
        assert_eq!(report.tail_mass, pow(&p, 15));
        assert_eq!(report.mean_exact, Some(int(2) / (Prob::one() - &p)));
        assert!(report.tail_assumed);
    }
}

#[test]
fn origin_mass_after_two_and_four_steps() {
    let walk = compile_extended(&samples::count_forever(), &ratio(1, 2), false, None).unwrap();
    let laws = propagate(&walk.kernel, &walk.origin(), 4, CAP).unwrap();
    assert_eq!(laws[2].get(&walk.origin()), ratio(1, 2));
    let first = return_time_exact(&walk.kernel, &walk.origin(), 4, CAP).unwrap();
    assert_eq!(first.pmf_prefix, vec![(2, ratio(1, 2)), (4, ratio(1, 4))]);
}

#[test]
fn simulated_excursions_have_even_length() {
    let walk = compile_extended(&samples::count_forever(), &ratio(1, 2), false, None).unwrap();
    for seed in 0..20 {
        let path = walk.kernel.simulate(&walk.origin(), 200, seed).unwrap();
        let first = path.iter().skip(1).position(WalkState::is_origin).map(|i| i + 1);
        let r = first.expect("no return within 200 steps");
        assert!(r >= 2 && r.is_multiple_of(2));
    }
}

#[test]
fn machine_examples() {
    let m = samples::halt_in_two();
    assert_eq!(m.run(m.halting(), 10).unwrap(), RunOutcome::Halted(2));
    assert_eq!(m.run(m.halting(), 0).unwrap(), RunOutcome::Running(m.halting()));
    let m = samples::count_forever();
    match m.run(m.halting(), 100).unwrap() {
        RunOutcome::Running(Configuration { state: 1, z1, z2: 0 }) => assert!(z1 >= 100),
        other => panic!("{other:?}"),
    }
}

/// With the extra coordinate an excursion with `s` survival draws lasts `3s`
/// steps and passes `n·e` once iff `s ≥ n`.
#[test]
fn q3_walk_cycle_decomposition() {
    for p in [ratio(1, 3), ratio(1, 2)] {
        let walk = compile_extended(&samples::count_forever(), &p, true, None).unwrap();
        let q3 = walk.layout.q3().unwrap();
        let mut v = vec![0u64; walk.layout.dimension()];
        v[q3] = 1;
        let report = ldrate_compiled(&walk, &v, 8, 20, 10_000).unwrap();
        for point in &report.points {
            let expected = pow(&p, point.n as u32 - 1) * (Prob::one() - &p) / int(3);
            assert_eq!(point.pi, expected, "n = {}", point.n);
        }
        let c = conditional_cycles(&walk, 3, 20, 10_000).unwrap();
        let e_r = int(3) / (Prob::one() - &p);
        assert_eq!(c.e_r, e_r);
        assert_eq!(c.prob_in, pow(&p, 2));
        assert_eq!(c.e_r_given_in, int(9) + int(3) * &p / (Prob::one() - &p));
        let mean = return_time_compiled(&walk, 30, 20, 10_000).unwrap();
        assert_eq!(mean.mean_exact, Some(e_r));
    }
}

#[test]
fn q3_walk_of_halting_machine_is_bounded() {
    let walk = compile_extended(&samples::halt_in_two(), &ratio(1, 2), true, None).unwrap();
    let pi = solve_stationary_exact(&walk.kernel, &walk.origin(), CAP).unwrap();
    let q3 = walk.layout.q3().unwrap();
    assert!(pi.keys().all(|s| s.0[q3] <= 2 * 2 + 1));
    assert!(pi.values().sum::<Prob>().is_one());
}

#[test]
fn queue_load_factors() {
    let single = QueueSystem::new(vec![1], 2, vec![ratio(1, 2)]).unwrap();
    let lf = load_factor(&single);
    assert_eq!(lf.rho, ratio(1, 4));
    assert!(lf.stable_necessary);
    let two = QueueSystem::new(vec![2, 3], 1, vec![ratio(1, 2), ratio(1, 5)]).unwrap();
    let lf = load_factor(&two);
    assert_eq!(lf.rho, ratio(8, 5));
    assert!(!lf.stable_necessary);
    let idle = QueueSystem::new(vec![2, 1], 3, vec![Prob::zero(), Prob::zero()]).unwrap();
    assert!(load_factor(&idle).rho.is_zero());
}

/// One buffer, one service per slot: an arrival is served in the slot it
/// arrives, so the epoch state is always empty and the pre-service content
/// is the arrival indicator.
#[test]
fn single_slot_queue_is_served_in_slot() {
    let s = QueueSystem::new(vec![1], 1, vec![ratio(1, 2)]).unwrap();
    let policy = PriorityPolicy::from_order(&s, vec![1]).unwrap();
    let chain = embedded_chain(&s, &policy);
    let pi = solve_stationary_exact(&chain, &vec![0], 100).unwrap();
    assert_eq!(pi.len(), 1);
    assert_eq!(chain.occupancy_means(&pi).unwrap(), vec![ratio(1, 2)]);
    let stats = queue_simulate(&s, &policy, 100_000, 3, 0).unwrap();
    assert_eq!(stats.empty_epoch_fraction, 1.0);
    assert!((stats.mean_occupancy[0] - 0.5).abs() < 4.0 * stats.occupancy_std_error.max(1e-3));
}

/// Two part types, two services per block: every block clears, and the
/// within-block contents depend on the priority order.
#[test]
fn two_type_block_occupancy_matches_simulation() {
    let s = QueueSystem::new(vec![1, 1], 2, vec![ratio(1, 2), ratio(1, 3)]).unwrap();
    let policy = PriorityPolicy::from_order(&s, vec![2, 1]).unwrap();
    let chain = embedded_chain(&s, &policy);
    let pi = solve_stationary_exact(&chain, &vec![0, 0], 100).unwrap();
    assert_eq!(pi.len(), 1);
    // slot 0 sees both arrivals; slot 1 sees what is left after one service
    let means = chain.occupancy_means(&pi).unwrap();
    assert_eq!(means, vec![ratio(1, 2) * ratio(1, 2) + ratio(1, 2) * ratio(1, 2) * ratio(1, 3), ratio(1, 6)]);
    let stats = queue_simulate(&s, &policy, 200_000, 11, 0).unwrap();
    for (sim, exact) in stats.mean_occupancy.iter().zip(&means) {
        assert!((sim - crate::rational::to_f64(exact)).abs() < 0.01, "{sim} vs {exact}");
    }
}
