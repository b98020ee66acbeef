//! Monte-Carlo oracles for the moment recursions.
//!
//! The oracles simulate the smoothing recursions directly (no shared code
//! with the multiplier implementations) and check that empirical moments
//! match `δ·c`, `λ·σ²` within four standard errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stepwise::osavi::OsaviState;
use stepwise::osavi_finite::FiniteOsaviState;

fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.into());
    rng
}

fn harmonic(a: f64, n: u64) -> f64 {
    a / (a + n as f64)
}

#[test]
fn infinite_horizon_moments_match_simulation() {
    let (gamma, c, sigma) = (0.9, 1.0, 1.0);
    let horizon = 50u64;
    let reps = 100_000u64;

    let mut state = OsaviState::new();
    for n in 1..=horizon {
        state.moments_update(harmonic(10.0, n), gamma).unwrap();
    }
    let expected_mean = state.delta() * c;
    let expected_var = state.lambda() * sigma * sigma;

    // Independent direct simulation of v̄ⁿ = (1−α)v̄ⁿ⁻¹ + α(ĉⁿ + γv̄ⁿ⁻¹).
    let normal = Normal::new(c, sigma).unwrap();
    let mut sum = 0.0f64;
    let mut sq_sum = 0.0f64;
    for rep in 0..reps {
        let mut rng = rep_rng(2_024, rep);
        let mut v_bar = 0.0f64;
        for n in 1..=horizon {
            let alpha = harmonic(10.0, n);
            let v_hat = normal.sample(&mut rng) + gamma * v_bar;
            v_bar = (1.0 - alpha) * v_bar + alpha * v_hat;
        }
        sum += v_bar;
        sq_sum += v_bar * v_bar;
    }
    let mean = sum / reps as f64;
    let var = (sq_sum / reps as f64 - mean * mean) * reps as f64 / (reps - 1) as f64;

    let mean_se = (expected_var / reps as f64).sqrt();
    assert!(
        (mean - expected_mean).abs() <= 4.0 * mean_se,
        "mean {mean} vs {expected_mean} (se {mean_se})"
    );
    let var_se = expected_var * (2.0 / (reps - 1) as f64).sqrt();
    assert!(
        (var - expected_var).abs() <= 4.0 * var_se,
        "variance {var} vs {expected_var} (se {var_se})"
    );
}

#[test]
fn finite_horizon_covariances_match_simulation() {
    let (gamma, c, sigma) = (0.9, 1.0, 1.0);
    let horizon = 5usize; // periods 1..=4 active
    let reps = 100_000u64;
    let snapshots = [1u64, 3, 10];
    let last = *snapshots.last().unwrap();
    let periods = horizon - 1;

    // Reference multipliers from the matrix recursion.
    let mut reference = Vec::new();
    {
        let mut state = FiniteOsaviState::new(horizon).unwrap();
        for n in 1..=last {
            let alphas = vec![harmonic(10.0, n); periods];
            state.moments_update(&alphas, gamma).unwrap();
            if snapshots.contains(&n) {
                reference.push(state.clone());
            }
        }
    }

    // Independent simulation of the per-period chain
    // v̂ⁿ_t = ĉⁿ_t + γ v̄ⁿ⁻¹_{t+1}, v̄ⁿ_t = (1−α_t) v̄ⁿ⁻¹_t + α_t v̂ⁿ_t,
    // with the terminal estimate pinned at zero.
    let normal = Normal::new(c, sigma).unwrap();
    let mut sums = vec![vec![0.0f64; periods]; snapshots.len()];
    let mut cross = vec![vec![0.0f64; periods * periods]; snapshots.len()];
    for rep in 0..reps {
        let mut rng = rep_rng(77, rep);
        let mut v_bar = vec![0.0f64; horizon + 1];
        for n in 1..=last {
            let alpha = harmonic(10.0, n);
            let mut next = v_bar.clone();
            for t in 1..=periods {
                let v_hat = normal.sample(&mut rng) + gamma * v_bar[t + 1];
                next[t] = (1.0 - alpha) * v_bar[t] + alpha * v_hat;
            }
            v_bar = next;
            if let Some(slot) = snapshots.iter().position(|&s| s == n) {
                for t in 0..periods {
                    sums[slot][t] += v_bar[t + 1];
                    for tp in 0..periods {
                        cross[slot][t * periods + tp] += v_bar[t + 1] * v_bar[tp + 1];
                    }
                }
            }
        }
    }

    for (slot, state) in reference.iter().enumerate() {
        for t in 1..=periods {
            let mean = sums[slot][t - 1] / reps as f64;
            let expected_mean = state.delta(t) * c;
            let mean_se = (state.lambda(t, t) * sigma * sigma / reps as f64).sqrt();
            assert!(
                (mean - expected_mean).abs() <= 4.0 * mean_se.max(1e-9),
                "n={} t={t}: mean {mean} vs {expected_mean}",
                snapshots[slot]
            );
            for tp in t..=periods {
                let raw = cross[slot][(t - 1) * periods + (tp - 1)] / reps as f64;
                let cov = (raw
                    - (sums[slot][t - 1] / reps as f64) * (sums[slot][tp - 1] / reps as f64))
                    * reps as f64
                    / (reps - 1) as f64;
                let expected = state.lambda(t, tp) * sigma * sigma;
                // Normal-theory standard error of a sample covariance.
                let se = ((state.lambda(t, t) * state.lambda(tp, tp)
                    + state.lambda(t, tp) * state.lambda(t, tp))
                    * sigma.powi(4)
                    / (reps - 1) as f64)
                    .sqrt();
                assert!(
                    (cov - expected).abs() <= 4.0 * se.max(1e-9),
                    "n={} ({t},{tp}): cov {cov} vs {expected} (se {se})",
                    snapshots[slot]
                );
            }
        }
    }
}
