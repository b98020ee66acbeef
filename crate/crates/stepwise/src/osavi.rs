//! Error-minimizing stepsize for bootstrapped value estimates.
//!
//! For the single-estimate recursion
//!
//! ```text
//! v̂ⁿ = ĉⁿ + γ v̄ⁿ⁻¹,     v̄ⁿ = (1 − αₙ₋₁) v̄ⁿ⁻¹ + αₙ₋₁ v̂ⁿ,
//! ```
//!
//! with i.i.d. rewards of mean `c` and variance `σ²`, the mean and variance
//! of `v̄ⁿ` are `δⁿ c` and `λⁿ σ²` for dimensionless multipliers that obey
//!
//! ```text
//! δⁿ = αₙ₋₁ + (1 − (1−γ) αₙ₋₁) δⁿ⁻¹,         δ¹ = α₀,
//! λⁿ = αₙ₋₁² + (1 − (1−γ) αₙ₋₁)² λⁿ⁻¹,       λ¹ = α₀².
//! ```
//!
//! [`OsaviState`] tracks the pair and evaluates the stepsize minimizing the
//! expected squared prediction error `E[(E v̂ⁿ − v̄ⁿ)²]`:
//!
//! ```text
//!          (1−γ) λⁿ⁻¹ σ² + (1 − (1−γ) δⁿ⁻¹)² c²
//! αₙ₋₁ = ─────────────────────────────────────────────
//!        (1−γ)² λⁿ⁻¹ σ² + (1 − (1−γ) δⁿ⁻¹)² c² + σ²
//! ```
//!
//! The numerator carries the variance and squared-bias terms of the previous
//! approximation; the denominator adds the observation noise. Both are sums
//! of nonnegative terms, so the stepsize always lies in `[0, 1]` without
//! clamping. When `c` and `σ²` are unknown they are replaced by the running
//! estimates in [`RewardStats`] (the plug-in form).

use crate::error::{Error, Result};

/// Secondary smoothing schedule for the reward statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondaryStepsize {
    /// Fixed ν each update. The default 0.2 discounts early transient
    /// observations; performance is not very sensitive to the exact value.
    Constant(f64),
    /// νₙ = 1/n, i.e. flat averaging of all reward observations.
    OneOverN,
}

/// Running plug-in estimates of the reward mean and variance.
///
/// Both start at zero and are smoothed with the secondary stepsize ν:
///
/// ```text
/// c̄ⁿ = (1−ν) c̄ⁿ⁻¹ + ν ĉⁿ,    (σ̄ⁿ)² = (1−ν) (σ̄ⁿ⁻¹)² + ν (ĉⁿ − c̄ⁿ⁻¹)².
/// ```
///
/// In a multi-state problem one system-wide instance is shared by all
/// estimates, since the one-period reward is stationary in steady state even
/// though the value approximations are not.
#[derive(Debug, Clone, Copy)]
pub struct RewardStats {
    c_bar: f64,
    sigma_sq_bar: f64,
    nu: SecondaryStepsize,
    n: u64,
}

impl RewardStats {
    pub fn new(nu: SecondaryStepsize) -> Result<Self> {
        if let SecondaryStepsize::Constant(v) = nu {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "secondary stepsize nu must be in (0,1], got {v}"
                )));
            }
        }
        Ok(RewardStats { c_bar: 0.0, sigma_sq_bar: 0.0, nu, n: 0 })
    }

    /// Stats smoothed with a constant ν.
    pub fn constant(nu: f64) -> Result<Self> {
        Self::new(SecondaryStepsize::Constant(nu))
    }

    /// Folds one reward observation into both estimates. The variance update
    /// reads the pre-update mean.
    pub fn update(&mut self, c_hat: f64) {
        self.n += 1;
        let nu = match self.nu {
            SecondaryStepsize::Constant(v) => v,
            SecondaryStepsize::OneOverN => 1.0 / self.n as f64,
        };
        let dev = c_hat - self.c_bar;
        self.sigma_sq_bar = (1.0 - nu) * self.sigma_sq_bar + nu * dev * dev;
        self.c_bar = (1.0 - nu) * self.c_bar + nu * c_hat;
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn sigma_sq_bar(&self) -> f64 {
        self.sigma_sq_bar
    }

    /// True until the first update; the plug-in stepsize returns 1 here so
    /// the initial approximation is overwritten rather than averaged.
    pub fn is_cold(&self) -> bool {
        self.c_bar == 0.0 && self.sigma_sq_bar == 0.0
    }
}

/// Mean and variance multipliers (δ, λ) of one smoothed estimate, plus the
/// update count and last stepsize applied.
///
/// The multipliers satisfy `0 ≤ δⁿ ≤ 1/(1−γ)` and `0 ≤ λⁿ ≤ 1/(γ(1−γ))` for
/// any stepsize sequence in `[0,1]`, and `λⁿ ≥ 1/n` whenever `α₀ = 1`.
#[derive(Debug, Clone, Copy)]
pub struct OsaviState {
    delta: f64,
    lambda: f64,
    n: u64,
    alpha_prev: f64,
}

impl Default for OsaviState {
    fn default() -> Self {
        Self::new()
    }
}

impl OsaviState {
    /// Fresh state: no updates applied yet; the first stepsize is α₀ = 1.
    pub fn new() -> Self {
        OsaviState { delta: 0.0, lambda: 0.0, n: 0, alpha_prev: 1.0 }
    }

    /// State with given multipliers after `n ≥ 1` updates. Used by
    /// diagnostics that evaluate the stepsize formula at a chosen point.
    pub fn from_parts(delta: f64, lambda: f64, n: u64) -> Self {
        assert!(n >= 1, "from_parts requires at least one applied update");
        OsaviState { delta, lambda, n, alpha_prev: f64::NAN }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of updates folded in so far.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn alpha_prev(&self) -> f64 {
        self.alpha_prev
    }

    /// Advances the moment recursion after a smoothing step with `alpha`.
    pub fn moments_update(&mut self, alpha: f64, gamma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "stepsize must be in [0,1], got {alpha}"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in [0,1), got {gamma}"
            )));
        }
        if self.n == 0 {
            self.delta = alpha;
            self.lambda = alpha * alpha;
        } else {
            let keep = 1.0 - (1.0 - gamma) * alpha;
            self.delta = alpha + keep * self.delta;
            self.lambda = alpha * alpha + keep * keep * self.lambda;
        }
        self.n += 1;
        self.alpha_prev = alpha;
        Ok(())
    }

    /// Error-minimizing stepsize when the reward mean and variance are known.
    ///
    /// Returns 1 before the first update (α₀ = 1) and whenever the
    /// denominator vanishes, which happens only in the zero-noise,
    /// zero-bias corner where overwriting is exact.
    pub fn alpha_known(&self, gamma: f64, c: f64, sigma_sq: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&gamma));
        debug_assert!(sigma_sq >= 0.0);
        if self.n == 0 {
            return 1.0;
        }
        let one_m_g = 1.0 - gamma;
        let bias = 1.0 - one_m_g * self.delta;
        let bias_sq = bias * bias * c * c;
        let num = one_m_g * self.lambda * sigma_sq + bias_sq;
        let den = one_m_g * one_m_g * self.lambda * sigma_sq + bias_sq + sigma_sq;
        if den <= 0.0 {
            1.0
        } else {
            num / den
        }
    }

    /// Plug-in form of [`OsaviState::alpha_known`] using estimated reward
    /// statistics. Cold-start statistics yield α = 1.
    pub fn alpha_plugin(&self, gamma: f64, stats: &RewardStats) -> f64 {
        if stats.is_cold() {
            return 1.0;
        }
        self.alpha_known(gamma, stats.c_bar(), stats.sigma_sq_bar())
    }
}
