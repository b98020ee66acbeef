//! Single-estimate benchmark: one state, one action, i.i.d. rewards.
//!
//! Each replication runs the bootstrapped smoothing recursion under a chosen
//! stepsize rule. The benchmark objective is the expected squared prediction
//! error `E[(E v̂ⁿ − v̄ⁿ)²]`, estimated across replications with a two-pass
//! scheme: pass one estimates `E v̂ⁿ = c + γ E v̄ⁿ⁻¹` from the
//! cross-replication mean, pass two (same seeds) averages the squared
//! deviations against it.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::osavi::RewardStats;
use crate::rng::{par_chunks, stream_rng};
use crate::rules::{RuleEngine, RuleKind, RuleObs};

/// Reward distribution; both are parameterized by mean `c` and standard
/// deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardDist {
    Normal,
    /// Uniform on `[c − √3 σ, c + √3 σ]`, for robustness studies.
    Uniform,
}

/// Configuration for the single-estimate benchmark.
#[derive(Debug, Clone, Copy)]
pub struct SingleStateConfig {
    /// Mean reward.
    pub c: f64,
    /// Reward standard deviation (σ ≥ 0).
    pub sigma: f64,
    /// Discount factor in [0,1).
    pub gamma: f64,
    /// Initial approximation.
    pub v_bar0: f64,
    pub n_iters: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub reward_dist: RewardDist,
}

impl SingleStateConfig {
    /// Benchmark defaults: `c = 1`, `σ = 1`, `γ = 0.9`, `v̄⁰ = 0`, desk-scale
    /// replication counts.
    pub fn new(c: f64, sigma: f64, gamma: f64) -> Self {
        SingleStateConfig {
            c,
            sigma,
            gamma,
            v_bar0: 0.0,
            n_iters: 10_000,
            n_reps: 1_000,
            seed: 0,
            reward_dist: RewardDist::Normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in [0,1), got {}",
                self.gamma
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.n_iters == 0 {
            return Err(Error::InvalidParameter("n_iters must be positive".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma == 0.0 {
            return self.c;
        }
        match self.reward_dist {
            RewardDist::Normal => {
                let dist = Normal::new(self.c, self.sigma).expect("validated sigma");
                dist.sample(rng)
            }
            RewardDist::Uniform => {
                let half = 3f64.sqrt() * self.sigma;
                rng.random_range(self.c - half..=self.c + half)
            }
        }
    }
}

/// Rule selection for this lab: a parsed rule, or the error-minimizing rule
/// with the config's true parameters (used by reductions and diagnostics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleSelect {
    Kind(RuleKind),
    OsaviKnown,
}

impl RuleSelect {
    fn build(&self, config: &SingleStateConfig) -> Result<(RuleEngine, Option<RewardStats>)> {
        match self {
            RuleSelect::OsaviKnown => {
                Ok((RuleEngine::osavi_known(config.c, config.sigma * config.sigma), None))
            }
            RuleSelect::Kind(kind) => {
                let stats = match kind {
                    RuleKind::OsaviInfinite { nu } => Some(RewardStats::constant(*nu)?),
                    _ => None,
                };
                Ok((RuleEngine::from_kind(kind)?, stats))
            }
        }
    }
}

/// One smoothing step: bootstrapped observation and updated estimate,
/// `v̂ = ĉ + γ v̄` and `v̄' = (1−α) v̄ + α v̂`.
pub fn avi_step(v_bar: f64, c_hat: f64, gamma: f64, alpha: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&alpha));
    let v_hat = c_hat + gamma * v_bar;
    (v_hat, (1.0 - alpha) * v_bar + alpha * v_hat)
}

/// Per-iteration record of a replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub n: u64,
    pub alpha: f64,
    pub v_bar: f64,
}

/// Streams one replication, invoking `visit(n, alpha, v̄ⁿ)` per iteration.
/// Replication `rep` draws from stream `rep` of the config seed.
fn simulate(
    config: &SingleStateConfig,
    rule: &RuleSelect,
    rep: u64,
    mut visit: impl FnMut(u64, f64, f64),
) -> Result<()> {
    let mut rng = stream_rng(config.seed, rep);
    let (mut engine, mut stats) = rule.build(config)?;
    let mut v_bar = config.v_bar0;
    for n in 1..=config.n_iters as u64 {
        let c_hat = config.draw(&mut rng);
        let v_hat = c_hat + config.gamma * v_bar;
        // Reward statistics are refreshed before the stepsize is computed.
        if let Some(stats) = stats.as_mut() {
            stats.update(c_hat);
        }
        let alpha =
            engine.alpha(RuleObs::single(v_hat, v_bar, n), config.gamma, stats.as_ref())?;
        v_bar = (1.0 - alpha) * v_bar + alpha * v_hat;
        visit(n, alpha, v_bar);
    }
    Ok(())
}

/// Runs one replication and returns its per-iteration records.
pub fn run_replication(
    config: &SingleStateConfig,
    rule: &RuleSelect,
    rep: u64,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.n_iters);
    simulate(config, rule, rep, |n, alpha, v_bar| {
        records.push(StepRecord { n, alpha, v_bar });
    })?;
    Ok(records)
}

/// Prediction-error objective at one iteration index.
#[derive(Debug, Clone, Copy)]
pub struct ObjectivePoint {
    pub n: u64,
    pub objective: f64,
    pub stderr: f64,
}

/// Replications per parallel chunk; fixed so reductions fold in a
/// thread-count-independent order.
const REP_CHUNK: usize = 32;

/// Estimates the objective curve `n ↦ E[(E v̂ⁿ − v̄ⁿ)²]` across replications.
///
/// Two passes over the same replication streams: the first accumulates the
/// cross-replication mean of `v̄ⁿ⁻¹` (so `Ê v̂ⁿ = c + γ m(n)`), the second
/// accumulates squared deviations from that estimate.
pub fn estimate_objective(
    config: &SingleStateConfig,
    rule: &RuleSelect,
) -> Result<Vec<ObjectivePoint>> {
    config.validate()?;
    if config.n_reps < 2 {
        return Err(Error::InvalidParameter("objective estimation needs n_reps >= 2".into()));
    }
    let iters = config.n_iters;
    let reps = config.n_reps;

    let chunk_sums = par_chunks(reps, REP_CHUNK, |range| {
        let mut sums = vec![0.0f64; iters];
        for rep in range {
            let mut prev = config.v_bar0;
            simulate(config, rule, rep as u64, |n, _, v_bar| {
                sums[(n - 1) as usize] += prev;
                prev = v_bar;
            })
            .expect("config validated");
        }
        sums
    });
    let mut e_vhat = vec![0.0f64; iters];
    for sums in &chunk_sums {
        for (acc, s) in e_vhat.iter_mut().zip(sums) {
            *acc += s;
        }
    }
    for value in e_vhat.iter_mut() {
        *value = config.c + config.gamma * (*value / reps as f64);
    }

    let chunk_moments = par_chunks(reps, REP_CHUNK, |range| {
        let mut sums = vec![0.0f64; iters];
        let mut sq_sums = vec![0.0f64; iters];
        for rep in range {
            simulate(config, rule, rep as u64, |n, _, v_bar| {
                let dev = e_vhat[(n - 1) as usize] - v_bar;
                let sq = dev * dev;
                sums[(n - 1) as usize] += sq;
                sq_sums[(n - 1) as usize] += sq * sq;
            })
            .expect("config validated");
        }
        (sums, sq_sums)
    });
    let mut points = Vec::with_capacity(iters);
    for i in 0..iters {
        let mut sum = 0.0;
        let mut sq_sum = 0.0;
        for (sums, sq_sums) in &chunk_moments {
            sum += sums[i];
            sq_sum += sq_sums[i];
        }
        let mean = sum / reps as f64;
        let var = ((sq_sum / reps as f64) - mean * mean).max(0.0);
        points.push(ObjectivePoint {
            n: (i + 1) as u64,
            objective: mean,
            stderr: (var / (reps as f64 - 1.0)).sqrt(),
        });
    }
    Ok(points)
}
