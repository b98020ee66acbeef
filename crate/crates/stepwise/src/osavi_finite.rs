//! Finite-horizon extension of the error-minimizing stepsize.
//!
//! With `T` stages and terminal condition `v̄ⁿ_T = 0`, each period keeps its
//! own estimate and the estimates are correlated across periods. The mean of
//! `v̄ⁿ_t` is `δⁿ_t c` and the covariance of `(v̄ⁿ_t, v̄ⁿ_t')` is
//! `λⁿ_{t,t'} σ²`, where
//!
//! ```text
//! δⁿ_t = (1 + γ δⁿ⁻¹_{t+1}) α_t + (1 − α_t) δⁿ⁻¹_t,          δ¹_t = α_{0,t},
//! λⁿ_{t,t'} = α_t² 1{t=t'} + J + K + L + M,                  λ¹_{t,t'} = α²_{0,t} 1{t=t'},
//!   J = (1−α_t)(1−α_t') λⁿ⁻¹_{t,t'}        K = γ (1−α_t) α_t' λⁿ⁻¹_{t,t'+1}
//!   L = γ α_t (1−α_t') λⁿ⁻¹_{t+1,t'}       M = γ² α_t α_t' λⁿ⁻¹_{t+1,t'+1}
//! ```
//!
//! (stepsizes evaluated at iteration n−1). The matrix starts diagonal and the
//! covariances spread outward one off-diagonal per iteration. The optimal
//! stepsize for period `t` is
//!
//! ```text
//!           (λ_{t,t} − γ λ_{t,t+1}) σ² + (1 − δ_t + γ δ_{t+1})² c²
//! α_t = ───────────────────────────────────────────────────────────────────
//!       (λ_{t,t} − 2γ λ_{t,t+1} + γ² λ_{t+1,t+1}) σ² + (1 − δ_t + γ δ_{t+1})² c² + σ²
//! ```
//!
//! with all multipliers taken at iteration n−1. At the last period the
//! coupling terms vanish and the rule reduces to plain `1/n` averaging.
//! Unlike the infinite-horizon formula there is no proof that this ratio
//! stays inside `[0,1]`, so it is clamped and the clamp events are counted.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::osavi::RewardStats;

/// Per-period mean vector and covariance-multiplier matrix for a `T`-stage
/// problem. Periods are 1-based; row and column `T` hold the terminal zeros.
#[derive(Debug)]
pub struct FiniteOsaviState {
    horizon: usize,
    delta: Vec<f64>,
    lambda: Vec<f64>,
    n: u64,
    clamp_events: AtomicU64,
}

impl Clone for FiniteOsaviState {
    fn clone(&self) -> Self {
        FiniteOsaviState {
            horizon: self.horizon,
            delta: self.delta.clone(),
            lambda: self.lambda.clone(),
            n: self.n,
            clamp_events: AtomicU64::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

impl FiniteOsaviState {
    /// Fresh state for horizon `T ≥ 2`: active periods are `1..=T−1`.
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        let dim = horizon + 1;
        Ok(FiniteOsaviState {
            horizon,
            delta: vec![0.0; dim],
            lambda: vec![0.0; dim * dim],
            n: 0,
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of moment updates applied.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Mean multiplier δ_t for `1 ≤ t ≤ T` (δ_T is identically 0).
    pub fn delta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.horizon);
        self.delta[t]
    }

    /// Covariance multiplier λ_{t,t'}; row/column `T` are identically 0.
    pub fn lambda(&self, t: usize, t_prime: usize) -> f64 {
        assert!(t >= 1 && t <= self.horizon && t_prime >= 1 && t_prime <= self.horizon);
        self.lambda[t * (self.horizon + 1) + t_prime]
    }

    /// Times the stepsize ratio left `[0,1]` and was clamped.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    #[inline]
    fn lam(&self, t: usize, t_prime: usize) -> f64 {
        self.lambda[t * (self.horizon + 1) + t_prime]
    }

    /// Advances the moment recursion once. `alphas[t−1]` is the stepsize
    /// applied at period `t` this iteration for `t = 1..=T−1`; pass 0 for
    /// periods that were not updated (α = 0 leaves a period's moments
    /// unchanged).
    pub fn moments_update(&mut self, alphas: &[f64], gamma: f64) -> Result<()> {
        let t_max = self.horizon - 1;
        if alphas.len() != t_max {
            return Err(Error::DimensionMismatch { expected: t_max, got: alphas.len() });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in [0,1], got {gamma}"
            )));
        }
        for &a in alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "stepsize must be in [0,1], got {a}"
                )));
            }
        }
        let dim = self.horizon + 1;
        if self.n == 0 {
            for t in 1..=t_max {
                self.delta[t] = alphas[t - 1];
                self.lambda[t * dim + t] = alphas[t - 1] * alphas[t - 1];
            }
        } else {
            let mut next_delta = self.delta.clone();
            for t in 1..=t_max {
                let a = alphas[t - 1];
                next_delta[t] = (1.0 + gamma * self.delta[t + 1]) * a + (1.0 - a) * self.delta[t];
            }
            let mut next_lambda = vec![0.0; dim * dim];
            // Compute the upper triangle and mirror so symmetry is exact.
            for t in 1..=t_max {
                let a_t = alphas[t - 1];
                for t_prime in t..=t_max {
                    let a_p = alphas[t_prime - 1];
                    let diag = if t == t_prime { a_t * a_t } else { 0.0 };
                    let j = (1.0 - a_t) * (1.0 - a_p) * self.lam(t, t_prime);
                    let k = gamma * (1.0 - a_t) * a_p * self.lam(t, t_prime + 1);
                    let l = gamma * a_t * (1.0 - a_p) * self.lam(t + 1, t_prime);
                    let m = gamma * gamma * a_t * a_p * self.lam(t + 1, t_prime + 1);
                    let value = diag + j + k + l + m;
                    next_lambda[t * dim + t_prime] = value;
                    next_lambda[t_prime * dim + t] = value;
                }
            }
            self.delta = next_delta;
            self.lambda = next_lambda;
        }
        self.n += 1;
        Ok(())
    }

    /// Error-minimizing stepsize for period `t` (`1 ≤ t ≤ T−1`) with known
    /// reward mean and variance, clamped to `[0,1]`. Returns 1 before the
    /// first update and on a vanishing denominator.
    pub fn alpha(&self, t: usize, gamma: f64, c: f64, sigma_sq: f64) -> f64 {
        assert!(t >= 1 && t < self.horizon, "period out of range");
        if self.n == 0 {
            return 1.0;
        }
        let l_tt = self.lam(t, t);
        let l_tn = self.lam(t, t + 1);
        let l_nn = self.lam(t + 1, t + 1);
        let bias = 1.0 - self.delta[t] + gamma * self.delta[t + 1];
        let bias_sq = bias * bias * c * c;
        let num = (l_tt - gamma * l_tn) * sigma_sq + bias_sq;
        let den = (l_tt - 2.0 * gamma * l_tn + gamma * gamma * l_nn) * sigma_sq + bias_sq + sigma_sq;
        if den <= 0.0 {
            return 1.0;
        }
        let alpha = num / den;
        if !(0.0..=1.0).contains(&alpha) {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            alpha.clamp(0.0, 1.0)
        } else {
            alpha
        }
    }

    /// Plug-in form of [`FiniteOsaviState::alpha`]. Cold-start statistics
    /// yield α = 1.
    pub fn alpha_plugin(&self, t: usize, gamma: f64, stats: &RewardStats) -> f64 {
        if stats.is_cold() {
            return 1.0;
        }
        self.alpha(t, gamma, stats.c_bar(), stats.sigma_sq_bar())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osavi::OsaviState;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn base_case_is_diagonal() {
        let mut s = FiniteOsaviState::new(4).unwrap();
        s.moments_update(&[1.0, 1.0, 1.0], 0.9).unwrap();
        for t in 1..=3 {
            assert_eq!(s.delta(t), 1.0);
            for tp in 1..=3 {
                assert_eq!(s.lambda(t, tp), if t == tp { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(s.delta(4), 0.0);
        assert_eq!(s.lambda(4, 2), 0.0);
    }

    #[test]
    fn hand_evaluated_three_period_example() {
        // T = 3, gamma = 0.9, alpha = 1 everywhere, two iterations.
        let mut s = FiniteOsaviState::new(3).unwrap();
        s.moments_update(&[1.0, 1.0], 0.9).unwrap();
        s.moments_update(&[1.0, 1.0], 0.9).unwrap();
        assert!((s.delta(1) - 1.9).abs() < 1e-15);
        assert_eq!(s.delta(2), 1.0);
        assert!((s.lambda(1, 1) - 1.81).abs() < 1e-15);
        assert_eq!(s.lambda(1, 2), 0.0);
        assert_eq!(s.lambda(2, 2), 1.0);

        // Known-parameter stepsize at t = 1 from this state is exactly 1/2:
        // bias = 1 - 1.9 + 0.9 = 0, num = 1.81, den = 1.81 + 0.81 + 1.
        let alpha = s.alpha(1, 0.9, 1.0, 1.0);
        assert_eq!(alpha, 0.5);
    }

    #[test]
    fn two_period_horizon_collapses_to_scalar_recursion() {
        // With T = 2 only t = 1 is active and the terminal row is zero, so
        // the recursion must match the scalar moments at gamma = 0.
        let mut finite = FiniteOsaviState::new(2).unwrap();
        let mut scalar = OsaviState::new();
        let mut rng = stream_rng(5, 0);
        for _ in 0..200 {
            let alpha: f64 = rng.random_range(0.0..=1.0);
            finite.moments_update(&[alpha], 0.7).unwrap();
            scalar.moments_update(alpha, 0.0).unwrap();
            assert!((finite.delta(1) - scalar.delta()).abs() < 1e-14);
            assert!((finite.lambda(1, 1) - scalar.lambda()).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetry_is_exact_after_random_updates() {
        let horizon = 7;
        let mut s = FiniteOsaviState::new(horizon).unwrap();
        let mut rng = stream_rng(6, 0);
        for _ in 0..60 {
            let alphas: Vec<f64> =
                (0..horizon - 1).map(|_| rng.random_range(0.0..=1.0)).collect();
            s.moments_update(&alphas, 0.95).unwrap();
            for t in 1..horizon {
                for tp in 1..horizon {
                    assert_eq!(s.lambda(t, tp).to_bits(), s.lambda(tp, t).to_bits());
                }
            }
        }
    }

    #[test]
    fn covariance_band_grows_one_off_diagonal_per_iteration() {
        let horizon = 10;
        let mut s = FiniteOsaviState::new(horizon).unwrap();
        for n in 1..=6u64 {
            let alphas = vec![0.5; horizon - 1];
            s.moments_update(&alphas, 0.9).unwrap();
            for t in 1..horizon {
                for tp in 1..horizon {
                    if (t as i64 - tp as i64).unsigned_abs() >= n {
                        assert_eq!(s.lambda(t, tp), 0.0, "n={n} t={t} t'={tp}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_alpha_leaves_period_moments_unchanged() {
        let mut s = FiniteOsaviState::new(4).unwrap();
        s.moments_update(&[1.0, 1.0, 1.0], 0.9).unwrap();
        let (d2, l22) = (s.delta(2), s.lambda(2, 2));
        // Period 2 idle; periods 1 and 3 keep updating.
        s.moments_update(&[0.4, 0.0, 0.7], 0.9).unwrap();
        assert_eq!(s.delta(2), d2);
        assert_eq!(s.lambda(2, 2), l22);
    }

    #[test]
    fn last_period_reduces_to_one_over_n() {
        let horizon = 5;
        let mut s = FiniteOsaviState::new(horizon).unwrap();
        let gamma = 0.9;
        let mut worst = 0.0_f64;
        for n in 1..=1000u64 {
            let mut alphas = vec![0.0; horizon - 1];
            for t in 1..horizon {
                alphas[t - 1] = s.alpha(t, gamma, 1.0, 1.0);
            }
            let last = alphas[horizon - 2];
            let rel = (last - 1.0 / n as f64).abs() * n as f64;
            worst = worst.max(rel);
            s.moments_update(&alphas, gamma).unwrap();
        }
        assert!(worst <= 1e-12, "max relative error {worst}");
        assert_eq!(s.clamp_events(), 0);
    }

    #[test]
    fn earlier_periods_get_larger_stepsizes() {
        // Known parameters: mean stepsize at t = 1 should dominate the mean
        // at the last period over the run.
        let horizon = 5;
        let gamma = 0.9;
        let mut s = FiniteOsaviState::new(horizon).unwrap();
        let (mut sum_first, mut sum_last) = (0.0, 0.0);
        for _ in 1..=500u64 {
            let mut alphas = vec![0.0; horizon - 1];
            for t in 1..horizon {
                alphas[t - 1] = s.alpha(t, gamma, 1.0, 1.0);
            }
            sum_first += alphas[0];
            sum_last += alphas[horizon - 2];
            s.moments_update(&alphas, gamma).unwrap();
        }
        assert!(sum_first > sum_last);
    }

    #[test]
    fn zero_noise_forces_overwrite() {
        let mut s = FiniteOsaviState::new(4).unwrap();
        s.moments_update(&[1.0, 1.0, 1.0], 0.8).unwrap();
        for t in 1..4 {
            assert_eq!(s.alpha(t, 0.8, 2.0, 0.0), 1.0);
        }
    }

    #[test]
    fn plugin_cold_start_returns_one() {
        let mut s = FiniteOsaviState::new(3).unwrap();
        s.moments_update(&[1.0, 1.0], 0.9).unwrap();
        let stats = RewardStats::constant(0.2).unwrap();
        assert_eq!(s.alpha_plugin(1, 0.9, &stats), 1.0);

        let mut warm = RewardStats::constant(1.0).unwrap();
        warm.update(1.0);
        warm.update(2.0);
        warm.update(1.0); // c̄ = 1, σ̄² = 1
        s.moments_update(&[1.0, 1.0], 0.9).unwrap();
        let plugin = s.alpha_plugin(1, 0.9, &warm);
        let known = s.alpha(1, 0.9, 1.0, 1.0);
        assert_eq!(plugin, known);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = FiniteOsaviState::new(4).unwrap();
        assert!(matches!(
            s.moments_update(&[1.0, 1.0], 0.9),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }
}
