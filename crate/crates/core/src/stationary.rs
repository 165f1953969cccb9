//! Transient laws, first-return times and stationary probabilities.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};
use rand::RngCore;

use crate::chain::MarkovChain;
use crate::lyapunov::{self, GeometricCertificate};
use crate::rational::{self, Prob};
use crate::reduction::{CompiledWalk, CycleProfile};
use crate::rng::episode_rng;
use crate::walk::{KernelSampler, TransitionKernel, WalkState};
use crate::{Error, Result};

/// Default cap on the number of states held at once.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseDistribution<S: Ord> {
    pub mass: BTreeMap<S, Prob>,
    pub leaked: Prob,
}

impl<S: Ord> SparseDistribution<S> {
    pub fn total(&self) -> Prob {
        self.mass.values().sum::<Prob>() + &self.leaked
    }

    pub fn get(&self, s: &S) -> Prob {
        self.mass.get(s).cloned().unwrap_or_else(Prob::zero)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloatDistribution<S: Ord> {
    pub mass: BTreeMap<S, f64>,
    /// Mass dropped below the truncation threshold.
    pub leaked: f64,
}

impl<S: Ord> FloatDistribution<S> {
    pub fn total(&self) -> f64 {
        self.mass.values().sum::<f64>() + self.leaked
    }

    pub fn get(&self, s: &S) -> f64 {
        self.mass.get(s).copied().unwrap_or(0.0)
    }
}

fn step_exact<C: MarkovChain>(chain: &C, dist: &BTreeMap<C::State, Prob>, cap: usize) -> Result<BTreeMap<C::State, Prob>> {
    let mut next: BTreeMap<C::State, Prob> = BTreeMap::new();
    for (s, m) in dist {
        for (t, p) in chain.successors(s)? {
            *next.entry(t).or_insert_with(Prob::zero) += m * p;
        }
        if next.len() > cap {
            return Err(Error::StateCap { cap });
        }
    }
    Ok(next)
}

/// Exact laws of `X_0..X_horizon` from `start`.
pub fn propagate<C: MarkovChain>(
    chain: &C,
    start: &C::State,
    horizon: u64,
    cap: usize,
) -> Result<Vec<SparseDistribution<C::State>>> {
    let mut current: BTreeMap<C::State, Prob> = BTreeMap::new();
    current.insert(start.clone(), Prob::one());
    let mut out = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon {
        if t > 0 {
            current = step_exact(chain, &current, cap)?;
        }
        out.push(SparseDistribution { mass: current.clone(), leaked: Prob::zero() });
    }
    Ok(out)
}

/// Float laws of `X_0..X_horizon`; states whose mass falls below `tau` are
/// moved into `leaked`.
pub fn propagate_f64<C: MarkovChain>(
    chain: &C,
    start: &C::State,
    horizon: u64,
    tau: f64,
    cap: usize,
) -> Result<Vec<FloatDistribution<C::State>>> {
    let mut cache: BTreeMap<C::State, Vec<(C::State, f64)>> = BTreeMap::new();
    let mut current = FloatDistribution { mass: BTreeMap::from([(start.clone(), 1.0)]), leaked: 0.0 };
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(current.clone());
    for _ in 0..horizon {
        let mut next: BTreeMap<C::State, f64> = BTreeMap::new();
        for (s, &m) in &current.mass {
            if !cache.contains_key(s) {
                let succ = chain.successors(s)?.into_iter().map(|(t, p)| (t, rational::to_f64(&p))).collect();
                cache.insert(s.clone(), succ);
            }
            for (t, p) in &cache[s] {
                *next.entry(t.clone()).or_insert(0.0) += m * p;
            }
            if next.len() > cap {
                return Err(Error::StateCap { cap });
            }
        }
        let mut leaked = current.leaked;
        next.retain(|_, m| {
            let keep = *m >= tau;
            if !keep {
                leaked += *m;
            }
            keep
        });
        current = FloatDistribution { mass: next, leaked };
        out.push(current.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReturnTimeReport<S> {
    pub target: S,
    /// `(t, P(first return = t))` for `1 ≤ t ≤ horizon`, zero entries omitted.
    pub pmf_prefix: Vec<(u64, Prob)>,
    /// `P(first return > horizon)`.
    pub tail_mass: Prob,
    pub horizon: u64,
    /// `Σ t·pmf(t) + (horizon + 1)·tail_mass`.
    pub mean_lower: Prob,
    pub mean_exact: Option<Prob>,
    pub pi_estimate: Option<Prob>,
    /// The mean relies on the analytic continuation of a compiled walk's
    /// excursion law.
    pub tail_assumed: bool,
}

/// First-return law to `target` up to `horizon`, with `target` made taboo.
pub fn return_time_exact<C: MarkovChain>(
    chain: &C,
    target: &C::State,
    horizon: u64,
    cap: usize,
) -> Result<ReturnTimeReport<C::State>> {
    let mut pmf = Vec::new();
    let mut current: BTreeMap<C::State, Prob> = BTreeMap::new();
    current.insert(target.clone(), Prob::one());
    for t in 1..=horizon {
        current = step_exact(chain, &current, cap)?;
        if let Some(back) = current.remove(target) {
            if back.is_positive() {
                pmf.push((t, back));
            }
        }
        if current.is_empty() {
            break;
        }
    }
    let returned: Prob = pmf.iter().map(|(_, p)| p).sum();
    let tail_mass = Prob::one() - returned;
    let prefix_mean: Prob = pmf.iter().map(|(t, p)| rational::int(*t as i64) * p).sum();
    let mean_lower = &prefix_mean + rational::int(horizon as i64 + 1) * &tail_mass;
    let mean_exact = tail_mass.is_zero().then(|| prefix_mean.clone());
    let pi_estimate = mean_exact.as_ref().map(|m| Prob::one() / m);
    Ok(ReturnTimeReport {
        target: target.clone(),
        pmf_prefix: pmf,
        tail_mass,
        horizon,
        mean_lower,
        mean_exact,
        pi_estimate,
        tail_assumed: false,
    })
}

/// Completes a first-return report at the origin of a compiled walk with its
/// excursion law. The prefix must agree with the profile exactly.
pub fn close_with_profile(mut report: ReturnTimeReport<WalkState>, profile: &CycleProfile) -> Result<ReturnTimeReport<WalkState>> {
    if !report.target.is_origin() {
        return Err(Error::NotApplicable("excursion closure is only defined at the origin".into()));
    }
    let expected: Vec<(u64, Prob)> = profile.pmf_upto(report.horizon).into_iter().filter(|(_, p)| p.is_positive()).collect();
    let (mass, moment) = profile.beyond(report.horizon);
    if expected != report.pmf_prefix || mass != report.tail_mass {
        return Err(Error::NotApplicable("propagated first-return law disagrees with the excursion law".into()));
    }
    let prefix_mean: Prob = report.pmf_prefix.iter().map(|(t, p)| rational::int(*t as i64) * p).sum();
    let mean = prefix_mean + moment;
    report.pi_estimate = Some(Prob::one() / &mean);
    report.mean_exact = Some(mean);
    report.tail_assumed = !profile.is_exhaustive();
    Ok(report)
}

/// Exact first-return law at the origin of a compiled walk, closed
/// analytically beyond `horizon`.
pub fn return_time_compiled(walk: &CompiledWalk, horizon: u64, budget: u64, machine_budget: u64) -> Result<ReturnTimeReport<WalkState>> {
    let report = return_time_exact(&walk.kernel, &walk.origin(), horizon, DEFAULT_STATE_CAP)?;
    let profile = walk.cycle_profile(budget.max(horizon / 2 + 2), &[], machine_budget)?;
    close_with_profile(report, &profile)
}

/// Integer accumulators for Monte Carlo first-return times; merging is
/// order-independent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct McAccumulator {
    pub episodes: u64,
    pub returned: u64,
    pub sum: u128,
    pub sum_sq: u128,
    pub counts: BTreeMap<u64, u64>,
}

impl McAccumulator {
    pub fn record(&mut self, r: Option<u64>) {
        self.episodes += 1;
        if let Some(t) = r {
            self.returned += 1;
            self.sum += u128::from(t);
            self.sum_sq += u128::from(t) * u128::from(t);
            *self.counts.entry(t).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: McAccumulator) {
        self.episodes += other.episodes;
        self.returned += other.returned;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (t, c) in other.counts {
            *self.counts.entry(t).or_insert(0) += c;
        }
    }

    pub fn summary(&self) -> McSummary {
        let n = self.returned as f64;
        let mean = self.sum as f64 / n;
        let var = (self.sum_sq as f64 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        McSummary {
            episodes: self.episodes,
            censored: self.episodes - self.returned,
            mean,
            std_dev: libm::sqrt(var),
            std_error: libm::sqrt(var / n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McSummary {
    pub episodes: u64,
    /// Episodes that did not return within the step cap.
    pub censored: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

/// One excursion from `target`; `None` if it has not returned after
/// `max_steps`.
pub fn sample_return<R: RngCore>(sampler: &KernelSampler<'_>, target: &WalkState, max_steps: u64, rng: &mut R) -> Result<Option<u64>> {
    let mut state = target.clone();
    for t in 1..=max_steps {
        sampler.step(&mut state, rng)?;
        if state == *target {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Episodes `first..first + count` of `seed`.
pub fn return_time_mc_range(
    kernel: &TransitionKernel,
    target: &WalkState,
    seed: u64,
    first: u64,
    count: u64,
    max_steps: u64,
) -> Result<McAccumulator> {
    let sampler = kernel.sampler();
    let mut acc = McAccumulator::default();
    for k in first..first + count {
        let mut rng = episode_rng(seed, k);
        acc.record(sample_return(&sampler, target, max_steps, &mut rng)?);
    }
    Ok(acc)
}

pub fn return_time_mc(kernel: &TransitionKernel, target: &WalkState, episodes: u64, seed: u64, max_steps: u64) -> Result<McSummary> {
    Ok(return_time_mc_range(kernel, target, seed, 0, episodes, max_steps)?.summary())
}

/// Outgoing `(index, probability)` pairs of one state.
pub type Edges = Vec<(usize, Prob)>;

/// States reachable from `seed`, in breadth-first order.
pub fn reachable_class<C: MarkovChain>(chain: &C, seed: &C::State, cap: usize) -> Result<(Vec<C::State>, Vec<Edges>)> {
    let mut index: BTreeMap<C::State, usize> = BTreeMap::new();
    let mut states = Vec::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(seed.clone(), 0);
    states.push(seed.clone());
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        let mut row = Vec::new();
        for (t, p) in chain.successors(&states[i])? {
            let j = match index.get(&t) {
                Some(&j) => j,
                None => {
                    if states.len() >= cap {
                        return Err(Error::InfiniteClass { cap });
                    }
                    let j = states.len();
                    index.insert(t.clone(), j);
                    states.push(t);
                    queue.push_back(j);
                    j
                }
            };
            row.push((j, p));
        }
        edges.push(row);
    }
    Ok((states, edges))
}

/// Solves `πP = π`, `Σπ = 1` on the class of `seed`.
///
/// Every state reachable from `seed` must lead back to it; otherwise the
/// class is not closed and the seed is transient.
pub fn solve_stationary_exact<C: MarkovChain>(chain: &C, seed: &C::State, cap: usize) -> Result<BTreeMap<C::State, Prob>> {
    let (states, edges) = reachable_class(chain, seed, cap)?;
    let n = states.len();
    let mut reverse: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (i, row) in edges.iter().enumerate() {
        for &(j, _) in row {
            reverse[j].push(i);
        }
    }
    let mut back = BTreeSet::from([0usize]);
    let mut stack = alloc::vec![0usize];
    while let Some(j) = stack.pop() {
        for &i in &reverse[j] {
            if back.insert(i) {
                stack.push(i);
            }
        }
    }
    if back.len() < n {
        return Err(Error::TransientSeed(n - back.len()));
    }

    // column i of the balance system: P(i, ·) − e_i; last equation replaced by Σπ = 1
    let mut a: Vec<Vec<Prob>> = alloc::vec![alloc::vec![Prob::zero(); n + 1]; n];
    for (i, row) in edges.iter().enumerate() {
        for (j, p) in row {
            a[*j][i] += p;
        }
        a[i][i] -= Prob::one();
    }
    for x in a[n - 1].iter_mut() {
        *x = Prob::one();
    }
    let pi = gauss_solve(a)?;
    Ok(states.into_iter().zip(pi).collect())
}

/// Mean first-return time to `target` on its finite class, from the
/// hitting-time equations `h(x) = 1 + Σ_{y≠target} P(x,y) h(y)`.
pub fn mean_return_exact<C: MarkovChain>(chain: &C, target: &C::State, cap: usize) -> Result<Prob> {
    let (_, edges) = reachable_class(chain, target, cap)?;
    let n = edges.len();
    if n == 1 {
        return Ok(Prob::one());
    }
    // unknowns h(1..n); row r is state r + 1
    let m = n - 1;
    let mut a: Vec<Vec<Prob>> = alloc::vec![alloc::vec![Prob::zero(); m + 1]; m];
    for (r, row) in a.iter_mut().enumerate() {
        row[r] = Prob::one();
        row[m] = Prob::one();
        for (j, p) in &edges[r + 1] {
            if *j > 0 {
                row[j - 1] -= p;
            }
        }
    }
    let h = gauss_solve(a).map_err(|_| Error::InvalidKernel("target is not reachable from its whole class".into()))?;
    Ok(edges[0].iter().fold(Prob::one(), |acc, (j, p)| if *j > 0 { acc + p * &h[j - 1] } else { acc }))
}

/// Solves the augmented system `[A | b]` exactly.
fn gauss_solve(mut a: Vec<Vec<Prob>>) -> Result<Vec<Prob>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).ok_or_else(|| Error::InvalidKernel("singular balance system".into()))?;
        a.swap(col, pivot);
        let inv = Prob::one() / &a[col][col];
        for x in a[col][col..].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n].clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApproxMode {
    /// User-supplied mixing constants.
    Certified { r: f64, rho: f64 },
    /// Constants fitted from the propagated law; not a proof.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxReport {
    pub lower: f64,
    pub upper: f64,
    pub p_t: f64,
    pub t: u64,
    pub r: f64,
    pub rho: f64,
    pub certified: bool,
    /// Computed on the lazy kernel `(I + P) / 2`.
    pub lazy: bool,
    pub leaked: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxParams {
    pub mode: ApproxMode,
    pub x0: WalkState,
    pub start: WalkState,
    pub epsilon: f64,
    pub horizon_cap: u64,
    pub tau: f64,
    /// Propagation window for the heuristic fit.
    pub fit_window: u64,
}

impl ApproxParams {
    pub fn new(mode: ApproxMode, x0: WalkState, start: WalkState, epsilon: f64) -> ApproxParams {
        ApproxParams { mode, x0, start, epsilon, horizon_cap: 1_000_000, tau: 1e-15, fit_window: 200 }
    }
}

/// Kernel and certificate actually used: the lazy version when the
/// exception set has no one-step self-transitions.
pub fn mixing_kernel(kernel: &TransitionKernel, cert: &GeometricCertificate) -> Result<(TransitionKernel, GeometricCertificate, bool)> {
    let inputs = lyapunov::mixing_inputs(kernel, cert)?;
    if inputs.p_b_min.is_zero() {
        let lazy = kernel.lazy();
        let mut lazy_cert = cert.lazy();
        lazy_cert.b_max = lyapunov::b_max(&lazy, &lazy_cert)?;
        Ok((lazy, lazy_cert, true))
    } else {
        Ok((kernel.clone(), cert.clone(), false))
    }
}

/// Fits `(R, ρ)` so that `|p_t − p_T| ≤ Φ_g(start) R ρ^t` on the window.
pub fn fit_mixing_constants(series: &[f64], phi_start: f64) -> (f64, f64) {
    let horizon = series.len() - 1;
    let limit = series[horizon];
    let mut envelope: Vec<f64> = series.iter().map(|p| (p - limit).abs()).collect();
    for t in (0..horizon).rev() {
        envelope[t] = envelope[t].max(envelope[t + 1]);
    }
    let (a, b) = (horizon / 4, horizon / 2);
    let rho = if envelope[a] > 0.0 && envelope[b] > 0.0 && b > a {
        libm::pow(envelope[b] / envelope[a], 1.0 / (b - a) as f64)
    } else {
        0.5
    };
    // slower decay than observed
    let rho = libm::sqrt(rho.clamp(1e-6, 1.0 - 1e-9));
    let r = (0..=b)
        .map(|t| envelope[t] / (phi_start * libm::pow(rho, t as f64)))
        .fold(f64::MIN_POSITIVE, f64::max);
    (2.0 * r, rho)
}

pub fn approx_stationary(kernel: &TransitionKernel, cert: &GeometricCertificate, params: &ApproxParams) -> Result<ApproxReport> {
    if !(params.epsilon > 0.0) {
        return Err(Error::Parameter("epsilon must be positive".into()));
    }
    let (kernel, cert, lazy) = mixing_kernel(kernel, cert)?;
    let phi_start = cert.phi(&params.start);
    let (r, rho, certified) = match params.mode {
        ApproxMode::Certified { r, rho } => {
            if !(r > 0.0) || !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Parameter("need R > 0 and 0 < rho < 1".into()));
            }
            (r, rho, true)
        }
        ApproxMode::Heuristic => {
            let laws = propagate_f64(&kernel, &params.start, params.fit_window.max(8), params.tau, DEFAULT_STATE_CAP)?;
            let series: Vec<f64> = laws.iter().map(|d| d.get(&params.x0)).collect();
            let (r, rho) = fit_mixing_constants(&series, phi_start);
            (r, rho, false)
        }
    };
    let ratio = params.epsilon / (r * phi_start);
    let t = if ratio >= 1.0 { 0.0 } else { libm::ceil(libm::log(ratio) / libm::log(rho)) };
    if !(t <= params.horizon_cap as f64) {
        return Err(Error::HorizonCap { required: t.min(u64::MAX as f64) as u64, cap: params.horizon_cap });
    }
    let t = t as u64;
    let laws = propagate_f64(&kernel, &params.start, t, params.tau, DEFAULT_STATE_CAP)?;
    let last = &laws[t as usize];
    let p_t = last.get(&params.x0);
    Ok(ApproxReport {
        lower: (p_t - params.epsilon).max(0.0),
        upper: p_t + params.epsilon + last.leaked,
        p_t,
        t,
        r,
        rho,
        certified,
        lazy,
        leaked: last.leaked,
    })
}

/// `(t, |p_t − π|, Φ_g(start) R ρ^t)` for `t = 1..=t_max`.
pub fn bound_check(
    kernel: &TransitionKernel,
    start: &WalkState,
    x0: &WalkState,
    pi: f64,
    phi_start: f64,
    (r, rho): (f64, f64),
    t_max: u64,
) -> Result<Vec<(u64, f64, f64)>> {
    let laws = propagate_f64(kernel, start, t_max, 0.0, DEFAULT_STATE_CAP)?;
    Ok((1..=t_max).map(|t| (t, (laws[t as usize].get(x0) - pi).abs(), phi_start * r * libm::pow(rho, t as f64))).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalCycles {
    /// `P(the excursion visits nv)`.
    pub prob_in: Prob,
    pub e_r_given_in: Prob,
    /// `None` when every excursion visits `nv`.
    pub e_r_given_not_in: Option<Prob>,
    pub e_r: Prob,
    pub tail_assumed: bool,
}

fn q3_state(walk: &CompiledWalk, n: u64) -> Result<WalkState> {
    let q3 = walk.layout.q3().ok_or_else(|| Error::NotApplicable("walk was compiled without q3".into()))?;
    let mut s = walk.origin();
    s.0[q3] = n;
    Ok(s)
}

/// Excursion statistics split on whether `n·e_{q3}` is visited.
pub fn conditional_cycles(walk: &CompiledWalk, n: u64, budget: u64, machine_budget: u64) -> Result<ConditionalCycles> {
    let target = q3_state(walk, n)?;
    let profile = walk.cycle_profile(budget.max(n + 3), &[target], machine_budget)?;
    if profile.is_exhaustive() {
        return Err(Error::NotApplicable("the machine halts; conditional cycle formulas assume it runs forever".into()));
    }
    let e_r = profile.mean_length();
    let (prob_in, moment_in, _) = profile.visit_moments(0);
    let e_r_given_in = &moment_in / &prob_in;
    let e_r_given_not_in = (prob_in < Prob::one()).then(|| (&e_r - &moment_in) / (Prob::one() - &prob_in));
    Ok(ConditionalCycles { prob_in, e_r_given_in, e_r_given_not_in, e_r, tail_assumed: true })
}

/// The published closed form for `1/π(n·e_{q3})`:
/// `p^{-n}(2/(1-p) − (4-p)p^n)/(1-p^n) + (4-p)`.
pub fn published_inverse_pi(p: &Prob, n: u32) -> Prob {
    let one = Prob::one();
    let pn = rational::pow(p, n);
    let four_minus_p = rational::int(4) - p;
    let not_in = (rational::int(2) / (&one - p) - &four_minus_p * &pn) / (&one - &pn);
    not_in / pn + four_minus_p
}

/// The published conditional means `(E[R|I_n], E[R|not I_n], P(I_n))`.
pub fn published_conditional(p: &Prob, n: u32) -> (Prob, Prob, Prob) {
    let one = Prob::one();
    let pn = rational::pow(p, n);
    let four_minus_p = rational::int(4) - p;
    let not_in = (rational::int(2) / (&one - p) - &four_minus_p * &pn) / (&one - &pn);
    (four_minus_p, not_in, pn)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdrPoint {
    pub n: u64,
    pub pi: Prob,
    /// `log π / n`; `None` when `π = 0`.
    pub log_pi_over_n: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdrReport {
    pub direction: Vec<u64>,
    pub points: Vec<LdrPoint>,
    /// Least-squares slope of `log π(nv)` against `n` over the upper two
    /// thirds of the range.
    pub slope_estimate: Option<f64>,
    pub l_minus: Option<f64>,
    pub l_plus: Option<f64>,
    /// `π(nv) = 0` for all `n ≥ n0` within the computed range, on an exact
    /// (finite) law.
    pub infinite: bool,
    pub n0: Option<u64>,
    pub tail_assumed: bool,
}

impl LdrReport {
    pub fn from_points(direction: Vec<u64>, points: Vec<LdrPoint>, exact_support: bool, tail_assumed: bool) -> LdrReport {
        let n_max = points.last().map_or(0, |p| p.n);
        let n0 = points.iter().rev().take_while(|p| p.pi.is_zero()).last().map(|p| p.n);
        let infinite = exact_support && n0.is_some();
        let mut report = LdrReport {
            direction,
            points,
            slope_estimate: None,
            l_minus: None,
            l_plus: None,
            infinite,
            n0,
            tail_assumed,
        };
        if !infinite {
            report.slope_estimate = report.slope_over((n_max / 3).max(1), n_max);
            let logs: Vec<(u64, f64)> = report.log_points(n_max / 2, n_max);
            let diffs: Vec<f64> = logs.windows(2).filter(|w| w[1].0 == w[0].0 + 1).map(|w| w[1].1 - w[0].1).collect();
            report.l_minus = diffs.iter().copied().reduce(f64::min);
            report.l_plus = diffs.iter().copied().reduce(f64::max);
        }
        report
    }

    fn log_points(&self, lo: u64, hi: u64) -> Vec<(u64, f64)> {
        self.points
            .iter()
            .filter(|p| p.n >= lo && p.n <= hi && p.pi.is_positive())
            .map(|p| (p.n, log_rational(&p.pi)))
            .collect()
    }

    /// Least-squares slope of `log π(nv)` on `lo ≤ n ≤ hi`.
    pub fn slope_over(&self, lo: u64, hi: u64) -> Option<f64> {
        let pts = self.log_points(lo, hi);
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 as f64 - mx) * (p.0 as f64 - mx)).sum();
        Some(sxy / sxx)
    }
}

/// Natural log of a positive rational without overflowing `f64`.
pub fn log_rational(x: &Prob) -> f64 {
    let n = x.numer().bits() as i64;
    let d = x.denom().bits() as i64;
    let shift = |v: &num_bigint::BigInt, bits: i64| -> f64 {
        let s = (bits - 60).max(0) as usize;
        libm::log(rational::to_f64(&Prob::from_integer(v >> s))) + s as f64 * core::f64::consts::LN_2
    };
    shift(x.numer(), n) - shift(x.denom(), d)
}

fn lattice_point(v: &[u64], n: u64) -> WalkState {
    WalkState(v.iter().map(|&x| x * n).collect())
}

/// Large-deviation points for a compiled walk from its excursion law:
/// `π(nv) = E[visits to nv per excursion] / E[R]`.
pub fn ldrate_compiled(walk: &CompiledWalk, v: &[u64], n_max: u64, budget: u64, machine_budget: u64) -> Result<LdrReport> {
    check_direction(v, walk.layout.dimension())?;
    let targets: Vec<WalkState> = (1..=n_max).map(|n| lattice_point(v, n)).collect();
    let profile = walk.cycle_profile(budget.max(2 * n_max + 4), &targets, machine_budget)?;
    let e_r = profile.mean_length();
    let points = (1..=n_max)
        .map(|n| {
            let (_, _, visits) = profile.visit_moments((n - 1) as usize);
            point(n, visits / &e_r)
        })
        .collect();
    Ok(LdrReport::from_points(v.to_vec(), points, profile.is_exhaustive(), !profile.is_exhaustive()))
}

/// Large-deviation points from an exact solve on a finite class; states
/// outside the class have `π = 0`.
pub fn ldrate_exact<C: MarkovChain<State = WalkState>>(chain: &C, seed: &WalkState, v: &[u64], n_max: u64, cap: usize) -> Result<LdrReport> {
    check_direction(v, seed.dimension())?;
    let pi = solve_stationary_exact(chain, seed, cap)?;
    let points = (1..=n_max).map(|n| point(n, pi.get(&lattice_point(v, n)).cloned().unwrap_or_else(Prob::zero))).collect();
    Ok(LdrReport::from_points(v.to_vec(), points, true, false))
}

fn point(n: u64, pi: Prob) -> LdrPoint {
    let log_pi_over_n = pi.is_positive().then(|| log_rational(&pi) / n as f64);
    LdrPoint { n, pi, log_pi_over_n }
}

fn check_direction(v: &[u64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v.len() });
    }
    if v.iter().all(|&x| x == 0) {
        return Err(Error::Parameter("direction v must be nonzero".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::samples::*;
    use crate::rational::{int, ratio};
    use crate::reduction::compile_extended;
    use crate::walk::tests::birth_death;
    use alloc::vec;

    const CAP: usize = 10_000;

    #[test]
    fn birth_death_propagation() {
        let laws = propagate(&birth_death(), &WalkState(vec![0]), 2, CAP).unwrap();
        assert_eq!(laws[2].get(&WalkState(vec![0])), int(1));
        assert_eq!(laws[1].get(&WalkState(vec![1])), int(1));
    }

    #[test]
    fn compiled_loop_propagation() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), false, None).unwrap();
        let laws = propagate(&walk.kernel, &walk.origin(), 4, CAP).unwrap();
        assert_eq!(laws[2].get(&walk.origin()), ratio(1, 2));
        for d in &laws {
            assert_eq!(d.total(), int(1));
        }
        let first = return_time_exact(&walk.kernel, &walk.origin(), 4, CAP).unwrap();
        assert_eq!(first.pmf_prefix, vec![(2, ratio(1, 2)), (4, ratio(1, 4))]);
    }

    #[test]
    fn float_propagation_leaks_small_mass() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), false, None).unwrap();
        let laws = propagate_f64(&walk.kernel, &walk.origin(), 60, 1e-6, CAP).unwrap();
        let last = laws.last().unwrap();
        assert!(last.leaked > 0.0);
        assert!((last.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birth_death_return_and_solve() {
        let k = birth_death();
        let r = return_time_exact(&k, &WalkState(vec![0]), 10, CAP).unwrap();
        assert_eq!(r.mean_exact, Some(int(2)));
        assert_eq!(r.pi_estimate, Some(ratio(1, 2)));
        let pi = solve_stationary_exact(&k, &WalkState(vec![0]), CAP).unwrap();
        assert_eq!(pi.values().cloned().collect::<Vec<_>>(), vec![ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn short_horizon_leaves_tail() {
        let r = return_time_exact(&birth_death(), &WalkState(vec![0]), 1, CAP).unwrap();
        assert_eq!(r.tail_mass, int(1));
        assert!(r.mean_exact.is_none());
    }

    #[test]
    fn halting_walk_solves() {
        for (p, expected) in [(ratio(1, 2), ratio(2, 7)), (ratio(1, 4), ratio(24, 63))] {
            let walk = compile_extended(&halt_in_two(), &p, false, None).unwrap();
            let pi = solve_stationary_exact(&walk.kernel, &walk.origin(), CAP).unwrap();
            assert_eq!(pi[&walk.origin()], expected);
            let r = return_time_exact(&walk.kernel, &walk.origin(), 100, CAP).unwrap();
            assert_eq!(r.pi_estimate, Some(expected.clone()));
            assert_eq!(mean_return_exact(&walk.kernel, &walk.origin(), CAP).unwrap(), Prob::one() / expected);
        }
    }

    #[test]
    fn infinite_class_is_reported() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), false, None).unwrap();
        assert_eq!(solve_stationary_exact(&walk.kernel, &walk.origin(), 50), Err(Error::InfiniteClass { cap: 50 }));
    }

    #[test]
    fn transient_seed_is_reported() {
        let mut k = TransitionKernel::new(1).unwrap();
        k.add_rule(crate::Face::EMPTY, vec![1], int(1)).unwrap();
        k.add_rule(crate::Face::from_indices([0]), vec![0], int(1)).unwrap();
        assert_eq!(solve_stationary_exact(&k, &WalkState(vec![0]), CAP), Err(Error::TransientSeed(1)));
    }

    #[test]
    fn compiled_loop_mean_closes() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), false, None).unwrap();
        let r = return_time_compiled(&walk, 20, 8, 10_000).unwrap();
        assert_eq!(r.mean_exact, Some(int(4)));
        assert_eq!(r.pi_estimate, Some(ratio(1, 4)));
        assert!(r.tail_assumed);
    }

    #[test]
    fn published_forms() {
        assert_eq!(published_inverse_pi(&ratio(1, 2), 3), ratio(505, 14));
        let (in_, not_in, p_in) = published_conditional(&ratio(1, 2), 3);
        assert_eq!((in_, not_in, p_in), (ratio(7, 2), ratio(57, 14), ratio(1, 8)));
    }

    #[test]
    fn conditional_cycles_q3() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), true, None).unwrap();
        let c = conditional_cycles(&walk, 3, 16, 10_000).unwrap();
        assert_eq!(c.prob_in, ratio(1, 4));
        assert_eq!(c.e_r, int(6));
        assert_eq!(c.e_r_given_in, int(12));
        assert_eq!(c.e_r_given_not_in, Some(int(4)));
        let c0 = conditional_cycles(&walk, 0, 16, 10_000).unwrap();
        assert_eq!(c0.prob_in, int(1));
        assert_eq!(c0.e_r_given_not_in, None);
    }

    #[test]
    fn ldrate_q3_and_halting() {
        let walk = compile_extended(&count_forever(), &ratio(1, 2), true, None).unwrap();
        let mut v = vec![0; walk.layout.dimension()];
        v[walk.layout.q3().unwrap()] = 1;
        let r = ldrate_compiled(&walk, &v, 12, 16, 10_000).unwrap();
        assert_eq!(r.points[2].pi, ratio(1, 24));
        assert!((r.slope_over(4, 12).unwrap() - libm::log(0.5)).abs() < 1e-9);
        assert!(!r.infinite);

        let walk = compile_extended(&halt_in_two(), &ratio(1, 2), true, None).unwrap();
        let r = ldrate_compiled(&walk, &v, 12, 16, 10_000).unwrap();
        assert!(r.infinite);
    }

    #[test]
    fn log_rational_handles_huge_values() {
        let x = rational::pow(&ratio(1, 3), 2000);
        assert!((log_rational(&x) - 2000.0 * libm::log(1.0 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn mc_matches_exact_mean() {
        let walk = compile_extended(&halt_in_two(), &ratio(1, 2), false, None).unwrap();
        let s = return_time_mc(&walk.kernel, &walk.origin(), 20_000, 7, 1_000).unwrap();
        assert_eq!(s.censored, 0);
        assert!((s.mean - 3.5).abs() < 5.0 * s.std_error);
    }
}
