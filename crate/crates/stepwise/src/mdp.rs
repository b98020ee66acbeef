//! Synthetic tabular MDPs: generation, exact solvers, and off-policy
//! bootstrapped training loops with per-entry stepsize state.
//!
//! The benchmark MDP has a sparse transition kernel (a fixed number of
//! reachable successors per state-action pair) and a two-mode reward mix so
//! the value function has genuine variety. Training deliberately decouples
//! stepsize behaviour from exploration: states and actions are drawn
//! uniformly at random, the observation bootstraps through the current table,
//! and only the visited entry is updated.
//!
//! Exact yardsticks: value iteration for the infinite-horizon optimum,
//! backward induction for the finite horizon, and a dense linear solve for
//! the value of a fixed policy. The benchmark metric is policy
//! suboptimality, the mean gap between optimal and greedy-policy values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::osavi::RewardStats;
use crate::osavi_finite::FiniteOsaviState;
use crate::rng::stream_rng;
use crate::rules::{RuleEngine, RuleKind, RuleObs};

/// Finite MDP with rewards on state-action pairs and a sparse transition
/// kernel. Rewards are fixed at generation; observation noise in training
/// comes from the random successor draws.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<(u32, f64)>>,
}

/// Transition rows must sum to one within this slack.
const ROW_SUM_TOL: f64 = 1e-12;

impl TabularMdp {
    /// Validates rewards and transition rows (probabilities positive, each
    /// row summing to 1 within 1e-12).
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<Vec<(u32, f64)>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidParameter("need at least one state and action".into()));
        }
        if rewards.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                got: rewards.len(),
            });
        }
        if transitions.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                got: transitions.len(),
            });
        }
        for row in &transitions {
            let mut sum = 0.0;
            for &(s, p) in row {
                if (s as usize) >= n_states {
                    return Err(Error::InvalidParameter(format!(
                        "successor {s} out of range"
                    )));
                }
                if !(p > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "transition probabilities must be positive, got {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "transition row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(TabularMdp { n_states, n_actions, rewards, transitions })
    }

    /// Benchmark generator: rewards are U[0,2] with probability 0.8 and
    /// U[18,20] otherwise; each pair reaches `k_reachable` distinct states
    /// with normalized U[0,1] weights.
    pub fn generate(
        n_states: usize,
        n_actions: usize,
        k_reachable: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k_reachable == 0 || k_reachable > n_states {
            return Err(Error::InvalidParameter(format!(
                "k_reachable must be in 1..={n_states}, got {k_reachable}"
            )));
        }
        let pairs = n_states * n_actions;
        let mut rewards = Vec::with_capacity(pairs);
        let mut transitions = Vec::with_capacity(pairs);
        let mut scratch: Vec<u32> = (0..n_states as u32).collect();
        for _ in 0..pairs {
            let reward = if rng.random::<f64>() < 0.8 {
                rng.random_range(0.0..2.0)
            } else {
                rng.random_range(18.0..20.0)
            };
            rewards.push(reward);

            // Partial Fisher-Yates draws k distinct successors uniformly.
            for i in 0..k_reachable {
                let j = rng.random_range(i..n_states);
                scratch.swap(i, j);
            }
            let mut row: Vec<(u32, f64)> = scratch[..k_reachable]
                .iter()
                .map(|&s| (s, rng.random_range(0.0f64..1.0)))
                .collect();
            row.sort_unstable_by_key(|&(s, _)| s);
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            for entry in row.iter_mut() {
                entry.1 /= total;
            }
            // Renormalize the largest entry so the row sums to 1 exactly.
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            let imax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            row[imax].1 += 1.0 - sum;
            transitions.push(row);
        }
        TabularMdp::new(n_states, n_actions, rewards, transitions)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.n_actions + action]
    }

    pub fn transitions(&self, state: usize, action: usize) -> &[(u32, f64)] {
        &self.transitions[state * self.n_actions + action]
    }

    /// Samples a successor state via inverse-CDF walk.
    pub fn sample_next(&self, state: usize, action: usize, rng: &mut impl Rng) -> usize {
        let row = self.transitions(state, action);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for &(s, p) in row {
            cum += p;
            if u < cum {
                return s as usize;
            }
        }
        row.last().expect("nonempty transition row").0 as usize
    }

    fn bellman_backup(&self, values: &[f64], gamma: f64, state: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for action in 0..self.n_actions {
            let mut expected = 0.0;
            for &(s, p) in self.transitions(state, action) {
                expected += p * values[s as usize];
            }
            let q = self.reward(state, action) + gamma * expected;
            if q > best {
                best = q;
            }
        }
        best
    }

    /// Synchronous value iteration to sup-norm Bellman residual `tol`.
    ///
    /// Sweeps stop once successive iterates differ by at most
    /// `tol (1−γ)/(2γ)`, which caps the residual of the final iterate at
    /// `γ` times that gap.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Result<ExactSolution> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in [0,1), got {gamma}"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        let threshold = if gamma > 0.0 { tol * (1.0 - gamma) / (2.0 * gamma) } else { tol };
        let mut values = vec![0.0f64; self.n_states];
        let mut sweeps = 0usize;
        loop {
            let next: Vec<f64> =
                (0..self.n_states).map(|s| self.bellman_backup(&values, gamma, s)).collect();
            let delta = values
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            values = next;
            sweeps += 1;
            if delta <= threshold {
                break;
            }
            if sweeps > 2_000_000 {
                return Err(Error::Numerical("value iteration failed to converge".into()));
            }
        }
        let residual = (0..self.n_states)
            .map(|s| (self.bellman_backup(&values, gamma, s) - values[s]).abs())
            .fold(0.0f64, f64::max);
        Ok(ExactSolution { values, residual, sweeps })
    }

    /// Greedy policy with respect to a state-value vector; ties break to the
    /// lowest action index.
    pub fn greedy_policy(&self, values: &[f64], gamma: f64) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let mut best = (0usize, f64::NEG_INFINITY);
                for action in 0..self.n_actions {
                    let mut expected = 0.0;
                    for &(sp, p) in self.transitions(s, action) {
                        expected += p * values[sp as usize];
                    }
                    let q = self.reward(s, action) + gamma * expected;
                    if q > best.1 {
                        best = (action, q);
                    }
                }
                best.0
            })
            .collect()
    }

    /// Exact value of a stationary policy via the dense linear system
    /// `(I − γ Pᵖ) v = Cᵖ`, solved with partially pivoted LU.
    pub fn policy_value(&self, policy: &[usize], gamma: f64) -> Result<Vec<f64>> {
        if policy.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                got: policy.len(),
            });
        }
        let n = self.n_states;
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            let x = policy[s];
            if x >= self.n_actions {
                return Err(Error::InvalidParameter(format!("action {x} out of range")));
            }
            for &(sp, p) in self.transitions(s, x) {
                a[(s, sp as usize)] -= gamma * p;
            }
            b[s] = self.reward(s, x);
        }
        let lu = a.clone().lu();
        let v = lu
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
        let residual = (&a * &v - &b).amax();
        if residual > 1e-10 {
            return Err(Error::Numerical(format!(
                "policy evaluation residual {residual} above 1e-10"
            )));
        }
        Ok(v.iter().copied().collect())
    }

    /// Exact finite-horizon values by backward induction with terminal
    /// condition `V_T ≡ 0`; decisions run at periods `1..=T−1`.
    pub fn backward_dp(&self, gamma: f64, horizon: usize) -> Result<FiniteSolution> {
        if horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        let mut values = vec![vec![0.0f64; self.n_states]; horizon + 1];
        for t in (1..horizon).rev() {
            values[t] = (0..self.n_states)
                .map(|s| self.bellman_backup(&values[t + 1], gamma, s))
                .collect();
        }
        Ok(FiniteSolution { horizon, values })
    }

    /// Exact value at every period of a time-dependent policy
    /// (`policies[t−1]` acts at period `t`), terminal condition zero.
    pub fn finite_policy_value(
        &self,
        policies: &[Vec<usize>],
        gamma: f64,
        horizon: usize,
    ) -> Result<FiniteSolution> {
        if policies.len() != horizon - 1 {
            return Err(Error::DimensionMismatch {
                expected: horizon - 1,
                got: policies.len(),
            });
        }
        let mut values = vec![vec![0.0f64; self.n_states]; horizon + 1];
        for t in (1..horizon).rev() {
            let policy = &policies[t - 1];
            if policy.len() != self.n_states {
                return Err(Error::DimensionMismatch {
                    expected: self.n_states,
                    got: policy.len(),
                });
            }
            values[t] = (0..self.n_states)
                .map(|s| {
                    let x = policy[s];
                    let mut expected = 0.0;
                    for &(sp, p) in self.transitions(s, x) {
                        expected += p * values[t + 1][sp as usize];
                    }
                    self.reward(s, x) + gamma * expected
                })
                .collect();
        }
        Ok(FiniteSolution { horizon, values })
    }
}

/// Infinite-horizon solver output.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub values: Vec<f64>,
    /// Sup-norm Bellman residual of `values`.
    pub residual: f64,
    pub sweeps: usize,
}

/// Finite-horizon values; `values[t][s]` for `t ∈ 1..=horizon`, with
/// `values[horizon]` identically zero and row 0 unused.
#[derive(Debug, Clone)]
pub struct FiniteSolution {
    pub horizon: usize,
    pub values: Vec<Vec<f64>>,
}

impl FiniteSolution {
    pub fn at(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
}

/// Mean over states of `V*(s) − Vᵖ(s)`; nonnegative whenever the policy is
/// evaluated on the same MDP that produced `V*`.
pub fn suboptimality(v_star: &[f64], v_pi: &[f64]) -> Result<f64> {
    if v_star.len() != v_pi.len() {
        return Err(Error::DimensionMismatch { expected: v_star.len(), got: v_pi.len() });
    }
    let gap: f64 = v_star.iter().zip(v_pi).map(|(a, b)| a - b).sum::<f64>() / v_star.len() as f64;
    assert!(gap >= -1e-8, "policy value exceeded the optimum: gap {gap}");
    Ok(gap)
}

/// Lookup-table approximation over state-action pairs, with visit counts.
#[derive(Debug, Clone)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    entry_visits: Vec<u64>,
    state_visits: Vec<u64>,
}

impl QTable {
    fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            entry_visits: vec![0; n_states * n_actions],
            state_visits: vec![0; n_states],
        }
    }

    #[inline]
    fn idx(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    pub fn value(&self, state: usize, action: usize) -> f64 {
        self.values[self.idx(state, action)]
    }

    pub fn entry_visits(&self, state: usize, action: usize) -> u64 {
        self.entry_visits[self.idx(state, action)]
    }

    pub fn state_visits(&self, state: usize) -> u64 {
        self.state_visits[state]
    }

    /// Greedy policy `argmax_x C(s,x) + γ V̄(s,x)`; ties break to the lowest
    /// action index.
    pub fn greedy_policy(&self, mdp: &TabularMdp, gamma: f64) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let mut best = (0usize, f64::NEG_INFINITY);
                for action in 0..self.n_actions {
                    let q = mdp.reward(s, action) + gamma * self.value(s, action);
                    if q > best.1 {
                        best = (action, q);
                    }
                }
                best.0
            })
            .collect()
    }
}

/// Rule selection for the MDP loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MdpRule {
    Kind(RuleKind),
    /// Known-parameter error-minimizing rule (uses the infinite- or
    /// finite-horizon machinery depending on the loop).
    OsaviKnown { c: f64, sigma_sq: f64 },
}

/// Table snapshot taken at a checkpoint iteration.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iter: u64,
    pub table: QTable,
}

/// One table update in the infinite-horizon loop, for tracing.
#[derive(Debug, Clone, Copy)]
pub struct InfiniteUpdate {
    pub iter: u64,
    pub state: usize,
    pub action: usize,
    pub alpha: f64,
    pub v_hat: f64,
    pub entry_visits: u64,
    pub state_visits: u64,
}

/// Off-policy bootstrapped training: per iteration a uniformly random
/// state-action pair is visited, a successor is sampled, the observation
/// `v̂ = max_x C(S',x) + γ V̄(S',x)` is formed from the current table, and
/// only the visited entry is smoothed. Reward statistics are system-wide.
pub fn run_avi_infinite(
    mdp: &TabularMdp,
    gamma: f64,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    rng: &mut impl Rng,
) -> Result<Vec<Checkpoint>> {
    run_avi_infinite_traced(mdp, gamma, rule, n_iters, checkpoints, rng, |_| {})
}

/// [`run_avi_infinite`] with a per-update observer.
pub fn run_avi_infinite_traced(
    mdp: &TabularMdp,
    gamma: f64,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    rng: &mut impl Rng,
    mut trace: impl FnMut(&InfiniteUpdate),
) -> Result<Vec<Checkpoint>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "discount factor must be in [0,1), got {gamma}"
        )));
    }
    let pairs = mdp.n_states * mdp.n_actions;
    let mut engines: Vec<RuleEngine> = match rule {
        MdpRule::Kind(kind) => {
            let engine = RuleEngine::from_kind(kind)?;
            vec![engine; pairs]
        }
        MdpRule::OsaviKnown { c, sigma_sq } => vec![RuleEngine::osavi_known(*c, *sigma_sq); pairs],
    };
    let mut stats = match rule {
        MdpRule::Kind(RuleKind::OsaviInfinite { nu }) => RewardStats::constant(*nu)?,
        _ => RewardStats::constant(0.2).expect("valid default"),
    };
    let mut schedule: Vec<u64> = checkpoints.to_vec();
    schedule.sort_unstable();
    schedule.dedup();
    let mut next_checkpoint = 0usize;

    let mut table = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut snapshots = Vec::with_capacity(schedule.len());
    for iter in 1..=n_iters {
        let state = rng.random_range(0..mdp.n_states);
        let action = rng.random_range(0..mdp.n_actions);
        let successor = mdp.sample_next(state, action, rng);

        let mut v_hat = f64::NEG_INFINITY;
        for x in 0..mdp.n_actions {
            let q = mdp.reward(successor, x) + gamma * table.value(successor, x);
            if q > v_hat {
                v_hat = q;
            }
        }
        stats.update(mdp.reward(state, action));

        let idx = table.idx(state, action);
        table.state_visits[state] += 1;
        table.entry_visits[idx] += 1;
        let obs = RuleObs {
            v_hat,
            v_bar_prev: table.values[idx],
            entry_count: table.entry_visits[idx],
            state_count: table.state_visits[state],
        };
        let alpha = engines[idx].alpha(obs, gamma, Some(&stats))?;
        table.values[idx] = (1.0 - alpha) * table.values[idx] + alpha * v_hat;
        trace(&InfiniteUpdate {
            iter,
            state,
            action,
            alpha,
            v_hat,
            entry_visits: table.entry_visits[idx],
            state_visits: table.state_visits[state],
        });

        if next_checkpoint < schedule.len() && schedule[next_checkpoint] == iter {
            snapshots.push(Checkpoint { iter, table: table.clone() });
            next_checkpoint += 1;
        }
    }
    Ok(snapshots)
}

/// Per-period tables from a finite-horizon run at a checkpoint; `tables[t−1]`
/// approximates period `t` for `t ∈ 1..=T−1`.
#[derive(Debug, Clone)]
pub struct FiniteCheckpoint {
    pub iter: u64,
    pub tables: Vec<QTable>,
}

impl FiniteCheckpoint {
    /// Greedy time-dependent policy, one action map per period.
    pub fn greedy_policies(&self, mdp: &TabularMdp, gamma: f64) -> Vec<Vec<usize>> {
        self.tables.iter().map(|table| table.greedy_policy(mdp, gamma)).collect()
    }
}

/// One table update in the finite-horizon loop, for tracing.
#[derive(Debug, Clone, Copy)]
pub struct FiniteUpdate {
    pub iter: u64,
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub alpha: f64,
    pub v_hat: f64,
    pub entry_visits: u64,
}

/// Finite-horizon off-policy training: each iteration sweeps periods
/// `t = 1..=T−1`, visiting an independent random pair per period and
/// bootstrapping through the period-`t+1` table (terminal table is zero).
///
/// The error-minimizing rule keeps one [`FiniteOsaviState`] per entry;
/// periods a state was not updated at enter its moment recursion with α = 0,
/// and the first update of each (period, entry) forces α = 1.
pub fn run_avi_finite(
    mdp: &TabularMdp,
    gamma: f64,
    horizon: usize,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    rng: &mut impl Rng,
) -> Result<Vec<FiniteCheckpoint>> {
    run_avi_finite_traced(mdp, gamma, horizon, rule, n_iters, checkpoints, rng, |_| {})
}

/// [`run_avi_finite`] with a per-update observer.
#[allow(clippy::too_many_arguments)]
pub fn run_avi_finite_traced(
    mdp: &TabularMdp,
    gamma: f64,
    horizon: usize,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    rng: &mut impl Rng,
    mut trace: impl FnMut(&FiniteUpdate),
) -> Result<Vec<FiniteCheckpoint>> {
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be at least 2, got {horizon}"
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "discount factor must be in [0,1], got {gamma}"
        )));
    }
    let pairs = mdp.n_states * mdp.n_actions;
    let periods = horizon - 1;

    enum FiniteRule {
        /// One engine per (period, entry).
        PerEntry(Vec<RuleEngine>),
        /// Error-minimizing rule: one moment state per entry spanning all
        /// periods; `None` for the plug-in form.
        Osavi { states: Vec<FiniteOsaviState>, known: Option<(f64, f64)> },
    }

    let mut finite_rule = match rule {
        MdpRule::Kind(RuleKind::OsaviInfinite { .. }) => {
            return Err(Error::InvalidParameter(
                "osavi is infinite-horizon; use osavi-finite here".into(),
            ))
        }
        MdpRule::Kind(RuleKind::OsaviFinite { .. }) => {
            let mut states = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                states.push(FiniteOsaviState::new(horizon)?);
            }
            FiniteRule::Osavi { states, known: None }
        }
        MdpRule::OsaviKnown { c, sigma_sq } => {
            let mut states = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                states.push(FiniteOsaviState::new(horizon)?);
            }
            FiniteRule::Osavi { states, known: Some((*c, *sigma_sq)) }
        }
        MdpRule::Kind(kind) => {
            let engine = RuleEngine::from_kind(kind)?;
            FiniteRule::PerEntry(vec![engine; periods * pairs])
        }
    };
    let mut stats = match rule {
        MdpRule::Kind(RuleKind::OsaviFinite { nu }) => RewardStats::constant(*nu)?,
        _ => RewardStats::constant(0.2).expect("valid default"),
    };

    let mut schedule: Vec<u64> = checkpoints.to_vec();
    schedule.sort_unstable();
    schedule.dedup();
    let mut next_checkpoint = 0usize;

    let mut tables: Vec<QTable> =
        (0..periods).map(|_| QTable::zeros(mdp.n_states, mdp.n_actions)).collect();
    let mut snapshots = Vec::with_capacity(schedule.len());
    // (entry, period, alpha) updates of the current iteration, applied to the
    // per-entry moment recursions after the sweep.
    let mut pending: Vec<(usize, usize, f64)> = Vec::with_capacity(periods);

    for iter in 1..=n_iters {
        pending.clear();
        // Ascending t reads the period-(t+1) table before it is touched this
        // iteration, preserving the simultaneous-sweep semantics.
        for t in 1..=periods {
            let state = rng.random_range(0..mdp.n_states);
            let action = rng.random_range(0..mdp.n_actions);
            let successor = mdp.sample_next(state, action, rng);

            let mut v_hat = f64::NEG_INFINITY;
            for x in 0..mdp.n_actions {
                let downstream =
                    if t < periods { tables[t].value(successor, x) } else { 0.0 };
                let q = mdp.reward(successor, x) + gamma * downstream;
                if q > v_hat {
                    v_hat = q;
                }
            }
            stats.update(mdp.reward(state, action));

            let table = &mut tables[t - 1];
            let idx = table.idx(state, action);
            table.state_visits[state] += 1;
            table.entry_visits[idx] += 1;
            let visits = table.entry_visits[idx];
            let alpha = match &mut finite_rule {
                FiniteRule::PerEntry(engines) => {
                    let obs = RuleObs {
                        v_hat,
                        v_bar_prev: table.values[idx],
                        entry_count: visits,
                        state_count: table.state_visits[state],
                    };
                    engines[(t - 1) * pairs + idx].alpha(obs, gamma, Some(&stats))?
                }
                FiniteRule::Osavi { states, known } => {
                    if visits == 1 {
                        1.0
                    } else {
                        match known {
                            Some((c, sigma_sq)) => states[idx].alpha(t, gamma, *c, *sigma_sq),
                            None => states[idx].alpha_plugin(t, gamma, &stats),
                        }
                    }
                }
            };
            table.values[idx] = (1.0 - alpha) * table.values[idx] + alpha * v_hat;
            if matches!(finite_rule, FiniteRule::Osavi { .. }) {
                pending.push((idx, t, alpha));
            }
            trace(&FiniteUpdate { iter, t, state, action, alpha, v_hat, entry_visits: visits });
        }

        if let FiniteRule::Osavi { states, .. } = &mut finite_rule {
            // Group this iteration's stepsizes by entry; untouched periods
            // stay at zero.
            pending.sort_unstable_by_key(|&(idx, _, _)| idx);
            let mut i = 0;
            while i < pending.len() {
                let idx = pending[i].0;
                let mut alphas = vec![0.0f64; periods];
                while i < pending.len() && pending[i].0 == idx {
                    alphas[pending[i].1 - 1] = pending[i].2;
                    i += 1;
                }
                states[idx].moments_update(&alphas, gamma)?;
            }
        }

        if next_checkpoint < schedule.len() && schedule[next_checkpoint] == iter {
            snapshots.push(FiniteCheckpoint { iter, tables: tables.clone() });
            next_checkpoint += 1;
        }
    }
    Ok(snapshots)
}

/// Suboptimality summary at one checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct SuboptPoint {
    pub checkpoint: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Per-seed infinite-horizon suboptimality at each checkpoint; seed `i` draws
/// from stream `i`. Returns `matrix[seed][checkpoint]`.
pub fn infinite_subopt_matrix(
    mdp: &TabularMdp,
    gamma: f64,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    n_seeds: u64,
    seed: u64,
    v_star: &[f64],
) -> Result<Vec<Vec<f64>>> {
    (0..n_seeds)
        .into_par_iter()
        .map(|stream| {
            let mut rng = stream_rng(seed, stream);
            let snapshots = run_avi_infinite(mdp, gamma, rule, n_iters, checkpoints, &mut rng)?;
            snapshots
                .iter()
                .map(|cp| {
                    let policy = cp.table.greedy_policy(mdp, gamma);
                    let v_pi = mdp.policy_value(&policy, gamma)?;
                    suboptimality(v_star, &v_pi)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Per-seed finite-horizon suboptimality (measured at period 1) at each
/// checkpoint. Returns `matrix[seed][checkpoint]`.
#[allow(clippy::too_many_arguments)]
pub fn finite_subopt_matrix(
    mdp: &TabularMdp,
    gamma: f64,
    horizon: usize,
    rule: &MdpRule,
    n_iters: u64,
    checkpoints: &[u64],
    n_seeds: u64,
    seed: u64,
    v_star_t1: &[f64],
) -> Result<Vec<Vec<f64>>> {
    (0..n_seeds)
        .into_par_iter()
        .map(|stream| {
            let mut rng = stream_rng(seed, stream);
            let snapshots =
                run_avi_finite(mdp, gamma, horizon, rule, n_iters, checkpoints, &mut rng)?;
            snapshots
                .iter()
                .map(|cp| {
                    let policies = cp.greedy_policies(mdp, gamma);
                    let v_pi = mdp.finite_policy_value(&policies, gamma, horizon)?;
                    suboptimality(v_star_t1, v_pi.at(1))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Mean and standard error per checkpoint across the seed axis.
pub fn summarize_subopt(checkpoints: &[u64], matrix: &[Vec<f64>]) -> Vec<SuboptPoint> {
    let seeds = matrix.len().max(1) as f64;
    checkpoints
        .iter()
        .enumerate()
        .map(|(j, &checkpoint)| {
            let mut sum = 0.0;
            let mut sq_sum = 0.0;
            for row in matrix {
                sum += row[j];
                sq_sum += row[j] * row[j];
            }
            let mean = sum / seeds;
            let var = ((sq_sum / seeds) - mean * mean).max(0.0);
            SuboptPoint { checkpoint, mean, stderr: (var / (seeds - 1.0).max(1.0)).sqrt() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_state::{run_replication, RuleSelect, SingleStateConfig};

    fn two_state_cycle() -> TabularMdp {
        // 0 -> 1 -> 0 deterministic, one action per state, rewards (1, 0).
        TabularMdp::new(
            2,
            1,
            vec![1.0, 0.0],
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap()
    }

    #[test]
    fn generator_has_exact_row_sums_and_degree() {
        let mut rng = stream_rng(1, 0);
        let mdp = TabularMdp::generate(100, 10, 10, &mut rng).unwrap();
        for s in 0..100 {
            for x in 0..10 {
                let row = mdp.transitions(s, x);
                assert_eq!(row.len(), 10);
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                let mut states: Vec<u32> = row.iter().map(|&(sp, _)| sp).collect();
                states.dedup();
                assert_eq!(states.len(), 10, "successors must be distinct");
            }
        }
    }

    #[test]
    fn generator_reward_mixture_matches_design() {
        // 1e5 pairs: the high-reward fraction concentrates near 0.2.
        let mut rng = stream_rng(2, 0);
        let mdp = TabularMdp::generate(10_000, 10, 5, &mut rng).unwrap();
        let mut high = 0usize;
        for s in 0..10_000 {
            for x in 0..10 {
                let r = mdp.reward(s, x);
                assert!((0.0..=2.0).contains(&r) || (18.0..=20.0).contains(&r));
                if r >= 18.0 {
                    high += 1;
                }
            }
        }
        let frac = high as f64 / 1e5;
        assert!((frac - 0.2).abs() <= 0.01, "high-reward fraction {frac}");
    }

    #[test]
    fn value_iteration_solves_single_state() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![vec![(0, 1.0)]]).unwrap();
        let sol = mdp.value_iteration(0.9, 1e-10).unwrap();
        assert!((sol.values[0] - 10.0).abs() < 1e-9);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn value_iteration_solves_two_state_cycle() {
        let sol = two_state_cycle().value_iteration(0.5, 1e-12).unwrap();
        assert!((sol.values[0] - 4.0 / 3.0).abs() < 1e-11);
        assert!((sol.values[1] - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn value_iteration_with_zero_discount_is_myopic() {
        let mut rng = stream_rng(3, 0);
        let mdp = TabularMdp::generate(30, 4, 3, &mut rng).unwrap();
        let sol = mdp.value_iteration(0.0, 1e-12).unwrap();
        for s in 0..30 {
            let best = (0..4).map(|x| mdp.reward(s, x)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sol.values[s], best);
        }
    }

    #[test]
    fn policy_value_matches_hand_solve_and_optimum() {
        let mdp = two_state_cycle();
        let v = mdp.policy_value(&[0, 0], 0.5).unwrap();
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);

        // Myopic case: the policy value is the chosen reward.
        let mut rng = stream_rng(4, 0);
        let mdp = TabularMdp::generate(20, 3, 4, &mut rng).unwrap();
        let policy: Vec<usize> = (0..20).map(|s| s % 3).collect();
        let v = mdp.policy_value(&policy, 0.0).unwrap();
        for s in 0..20 {
            assert!((v[s] - mdp.reward(s, policy[s])).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_policy_of_optimum_recovers_optimal_value() {
        let mut rng = stream_rng(5, 0);
        let mdp = TabularMdp::generate(100, 10, 10, &mut rng).unwrap();
        let tol = 1e-10;
        let sol = mdp.value_iteration(0.9, tol).unwrap();
        let policy = mdp.greedy_policy(&sol.values, 0.9);
        let v_pi = mdp.policy_value(&policy, 0.9).unwrap();
        let gap = suboptimality(&v_pi, &sol.values).unwrap_or_else(|_| unreachable!());
        assert!(gap.abs() <= 10.0 * tol, "gap {gap}");
    }

    #[test]
    fn suboptimality_examples() {
        assert_eq!(suboptimality(&[10.0, 10.0], &[10.0, 10.0]).unwrap(), 0.0);
        assert_eq!(suboptimality(&[10.0, 10.0], &[9.0, 8.0]).unwrap(), 1.5);
        assert!(suboptimality(&[1.0], &[1.0, 2.0]).is_err());

        // A uniformly random policy on a generated MDP is strictly worse
        // than the optimum.
        let mut rng = stream_rng(6, 0);
        let mdp = TabularMdp::generate(50, 5, 6, &mut rng).unwrap();
        let sol = mdp.value_iteration(0.9, 1e-10).unwrap();
        let policy: Vec<usize> = (0..50).map(|s| (s * 7) % 5).collect();
        let v_pi = mdp.policy_value(&policy, 0.9).unwrap();
        assert!(suboptimality(&sol.values, &v_pi).unwrap() > 0.0);
    }

    #[test]
    fn backward_dp_examples() {
        let mdp = two_state_cycle();
        let sol = mdp.backward_dp(0.5, 3).unwrap();
        // V_2 is myopic; V_1(0) = 1 + 0.5 V_2(1), V_1(1) = 0.5 V_2(0).
        assert_eq!(sol.at(2), &[1.0, 0.0]);
        assert_eq!(sol.at(1)[0], 1.0);
        assert_eq!(sol.at(1)[1], 0.5);
        assert_eq!(sol.at(3), &[0.0, 0.0]);

        let mut rng = stream_rng(7, 0);
        let mdp = TabularMdp::generate(20, 3, 4, &mut rng).unwrap();
        let two = mdp.backward_dp(0.7, 2).unwrap();
        let zero_gamma = mdp.backward_dp(0.0, 5).unwrap();
        for s in 0..20 {
            let myopic = (0..3).map(|x| mdp.reward(s, x)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(two.at(1)[s], myopic);
            for t in 1..5 {
                assert_eq!(zero_gamma.at(t)[s], myopic);
            }
        }
    }

    #[test]
    fn degenerate_mdp_training_matches_single_state_lab() {
        // One state, one action, deterministic reward: the loop reduces to
        // the scalar recursion, so the trajectory must match the single-state
        // lab exactly (no RNG influence once sigma = 0 and draws are fixed).
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![vec![(0, 1.0)]]).unwrap();
        let rule = MdpRule::OsaviKnown { c: 1.0, sigma_sq: 0.0 };
        let mut rng = stream_rng(8, 0);
        let snapshots =
            run_avi_infinite(&mdp, 0.9, &rule, 200, &[200], &mut rng).unwrap();
        let table_value = snapshots[0].table.value(0, 0);

        let mut config = SingleStateConfig::new(1.0, 0.0, 0.9);
        config.n_iters = 200;
        let records = run_replication(&config, &RuleSelect::OsaviKnown, 0).unwrap();
        assert!((table_value - records.last().unwrap().v_bar).abs() < 1e-12);
    }

    #[test]
    fn one_over_n_uses_entry_counts_and_harmonic_uses_state_counts() {
        let mut rng = stream_rng(9, 0);
        let mdp = TabularMdp::generate(10, 3, 4, &mut rng).unwrap();

        let mut rng = stream_rng(9, 1);
        run_avi_infinite_traced(
            &mdp,
            0.9,
            &MdpRule::Kind(RuleKind::OneOverN),
            2_000,
            &[],
            &mut rng,
            |u| assert_eq!(u.alpha, 1.0 / u.entry_visits as f64),
        )
        .unwrap();

        let mut rng = stream_rng(9, 1);
        run_avi_infinite_traced(
            &mdp,
            0.9,
            &MdpRule::Kind(RuleKind::Harmonic { a: 10.0 }),
            2_000,
            &[],
            &mut rng,
            |u| assert_eq!(u.alpha, 10.0 / (10.0 + u.state_visits as f64)),
        )
        .unwrap();
    }

    #[test]
    fn checkpoint_schedule_emits_snapshots() {
        let mut rng = stream_rng(10, 0);
        let mdp = TabularMdp::generate(10, 2, 3, &mut rng).unwrap();
        let rule = MdpRule::Kind(RuleKind::OsaviInfinite { nu: 0.2 });
        let mut rng = stream_rng(10, 1);
        let snapshots =
            run_avi_infinite(&mdp, 0.9, &rule, 1_000, &[100, 500, 1_000], &mut rng).unwrap();
        assert_eq!(snapshots.len(), 3);
        assert_eq!(
            snapshots.iter().map(|c| c.iter).collect::<Vec<_>>(),
            vec![100, 500, 1_000]
        );
    }

    #[test]
    fn training_has_no_lookahead() {
        // A checkpoint mid-run must equal the final table of a run truncated
        // at that iteration with the same stream.
        let mut rng = stream_rng(11, 0);
        let mdp = TabularMdp::generate(15, 3, 4, &mut rng).unwrap();
        let rule = MdpRule::Kind(RuleKind::OsaviInfinite { nu: 0.2 });

        let mut rng = stream_rng(11, 1);
        let long = run_avi_infinite(&mdp, 0.9, &rule, 1_000, &[500], &mut rng).unwrap();
        let mut rng = stream_rng(11, 1);
        let short = run_avi_infinite(&mdp, 0.9, &rule, 500, &[500], &mut rng).unwrap();
        assert_eq!(long[0].table.values, short[0].table.values);
        assert_eq!(long[0].table.entry_visits, short[0].table.entry_visits);
    }

    #[test]
    fn off_policy_loop_visits_states_uniformly() {
        let mut rng = stream_rng(12, 0);
        let mdp = TabularMdp::generate(100, 10, 10, &mut rng).unwrap();
        let rule = MdpRule::Kind(RuleKind::OneOverN);
        let mut rng = stream_rng(12, 1);
        let snapshots = run_avi_infinite(&mdp, 0.9, &rule, 10_000, &[10_000], &mut rng).unwrap();
        let table = &snapshots[0].table;
        let expected = 10_000.0 / 100.0;
        let chi_sq: f64 = (0..100)
            .map(|s| {
                let observed = table.state_visits(s) as f64;
                (observed - expected) * (observed - expected) / expected
            })
            .sum();
        // 99% band for chi-square with 99 degrees of freedom.
        assert!(
            (66.5..=139.0).contains(&chi_sq),
            "visit-count chi-square {chi_sq} outside the 99% band"
        );
    }

    #[test]
    fn finite_loop_rejects_infinite_rule_and_vice_versa() {
        let mdp = two_state_cycle();
        let mut rng = stream_rng(13, 0);
        assert!(run_avi_finite(
            &mdp,
            0.9,
            4,
            &MdpRule::Kind(RuleKind::OsaviInfinite { nu: 0.2 }),
            10,
            &[],
            &mut rng
        )
        .is_err());
        assert!(run_avi_infinite(
            &mdp,
            0.9,
            &MdpRule::Kind(RuleKind::OsaviFinite { nu: 0.2 }),
            10,
            &[],
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn finite_two_period_horizon_is_bandit_averaging() {
        // T = 2: the only period bootstraps into the zero terminal table, so
        // under 1/n each entry averages max_x C(S', x) over its visits.
        let mut rng = stream_rng(14, 0);
        let mdp = TabularMdp::generate(6, 2, 3, &mut rng).unwrap();
        let mut rng = stream_rng(14, 1);
        let mut sums = vec![0.0f64; 12];
        let mut counts = vec![0u64; 12];
        let snapshots = run_avi_finite_traced(
            &mdp,
            0.9,
            2,
            &MdpRule::Kind(RuleKind::OneOverN),
            2_000,
            &[2_000],
            &mut rng,
            |u| {
                sums[u.state * 2 + u.action] += u.v_hat;
                counts[u.state * 2 + u.action] += 1;
            },
        )
        .unwrap();
        let table = &snapshots[0].tables[0];
        for s in 0..6 {
            for x in 0..2 {
                if counts[s * 2 + x] > 0 {
                    let mean = sums[s * 2 + x] / counts[s * 2 + x] as f64;
                    assert!((table.value(s, x) - mean).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn finite_last_period_known_rule_is_one_over_visits() {
        let mut rng = stream_rng(15, 0);
        let mdp = TabularMdp::generate(5, 2, 3, &mut rng).unwrap();
        let rule = MdpRule::OsaviKnown { c: 3.0, sigma_sq: 2.0 };
        let horizon = 4;
        let mut rng = stream_rng(15, 1);
        let mut checked = 0u64;
        run_avi_finite_traced(&mdp, 0.99, horizon, &rule, 1_000, &[], &mut rng, |u| {
            if u.t == horizon - 1 {
                let expected = 1.0 / u.entry_visits as f64;
                assert!(
                    (u.alpha - expected).abs() <= 1e-12 * expected,
                    "iter {}: alpha {} vs 1/{}",
                    u.iter,
                    u.alpha,
                    u.entry_visits
                );
                checked += 1;
            }
        })
        .unwrap();
        assert_eq!(checked, 1_000);
    }

    #[test]
    fn finite_determinism_and_snapshot_shape() {
        let mut rng = stream_rng(16, 0);
        let mdp = TabularMdp::generate(8, 2, 3, &mut rng).unwrap();
        let rule = MdpRule::Kind(RuleKind::OsaviFinite { nu: 0.2 });
        let mut rng_a = stream_rng(16, 1);
        let a = run_avi_finite(&mdp, 0.99, 5, &rule, 300, &[300], &mut rng_a).unwrap();
        let mut rng_b = stream_rng(16, 1);
        let b = run_avi_finite(&mdp, 0.99, 5, &rule, 300, &[300], &mut rng_b).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].tables.len(), 4);
        for (ta, tb) in a[0].tables.iter().zip(&b[0].tables) {
            assert_eq!(ta.values, tb.values);
        }
    }

    #[test]
    fn subopt_matrix_shape_and_cross_check() {
        let mut rng = stream_rng(17, 0);
        let mdp = TabularMdp::generate(30, 4, 5, &mut rng).unwrap();
        let sol = mdp.value_iteration(0.9, 1e-10).unwrap();
        let rule = MdpRule::Kind(RuleKind::OsaviInfinite { nu: 0.2 });
        let matrix = infinite_subopt_matrix(
            &mdp,
            0.9,
            &rule,
            500,
            &[100, 500],
            8,
            21,
            &sol.values,
        )
        .unwrap();
        assert_eq!(matrix.len(), 8);
        assert!(matrix.iter().all(|row| row.len() == 2 && row.iter().all(|g| *g >= 0.0)));
        let summary = summarize_subopt(&[100, 500], &matrix);
        assert_eq!(summary.len(), 2);
        assert!(summary[0].stderr >= 0.0);
    }
}
