//! Stepsize rules compared by the benchmark labs.
//!
//! Deterministic rules (`1/n`, constant, polynomial, harmonic) are pure
//! functions of an iteration or visit count. Adaptive rules carry
//! per-estimate state: McClain's recursion, the bias-adjusted Kalman filter
//! (BAKF), incremental Delta-Bar-Delta (IDBD), and the error-minimizing rule
//! from [`crate::osavi`]. [`RuleEngine`] gives the labs one updater interface
//! over all of them.
//!
//! Rule selections are written as `name(:key=value)*`, e.g. `harmonic:a=10`,
//! `mcclain:abar=0.1`, `bakf:nu=0.05`, `idbd:theta=0.001`, `osavi:nu=0.2`.

use std::fmt;

use crate::error::{Error, Result};
use crate::osavi::{OsaviState, RewardStats};

/// A stepsize rule and its tunable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    /// αₙ₋₁ = 1/n: flat averaging of the observations.
    OneOverN,
    /// αₙ₋₁ ≡ ᾱ for a fixed ᾱ ∈ (0,1].
    Constant { alpha: f64 },
    /// αₙ₋₁ = n^(−β) with β ∈ (0.5, 1].
    Polynomial { beta: f64 },
    /// αₙ₋₁ = a/(a+n) with a > 0. Tuning `a` is highly problem dependent.
    Harmonic { a: f64 },
    /// Starts at 1, declines like 1/n, and converges to the limit point
    /// ᾱ ∈ (0,1) within roughly ten iterations.
    McClain { target: f64 },
    /// Bias-adjusted Kalman filter with secondary smoothing ν̄ ∈ (0,1] for
    /// the bias and noise estimates. Assumes independent observations.
    Bakf { nu: f64 },
    /// Incremental Delta-Bar-Delta: exponentiated-gradient adaptation of the
    /// stepsize with meta learning rate θ > 0.
    Idbd { theta: f64 },
    /// Error-minimizing rule for bootstrapped estimates, plug-in form, with
    /// secondary stepsize ν ∈ (0,1] for the reward statistics.
    OsaviInfinite { nu: f64 },
    /// Finite-horizon variant; requires the per-period machinery in
    /// [`crate::osavi_finite`].
    OsaviFinite { nu: f64 },
}

impl RuleKind {
    /// Checks the parameter ranges documented on each variant.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            RuleKind::OneOverN => Ok(()),
            RuleKind::Constant { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                fail(format!("constant stepsize must be in (0,1], got {alpha}"))
            }
            RuleKind::Polynomial { beta } if !(beta > 0.5 && beta <= 1.0) => {
                fail(format!("polynomial exponent must be in (0.5,1], got {beta}"))
            }
            RuleKind::Harmonic { a } if !(a > 0.0) => {
                fail(format!("harmonic parameter must be positive, got {a}"))
            }
            RuleKind::McClain { target } if !(target > 0.0 && target < 1.0) => {
                fail(format!("mcclain limit point must be in (0,1), got {target}"))
            }
            RuleKind::Bakf { nu } | RuleKind::OsaviInfinite { nu } | RuleKind::OsaviFinite { nu }
                if !(nu > 0.0 && nu <= 1.0) =>
            {
                fail(format!("secondary stepsize must be in (0,1], got {nu}"))
            }
            RuleKind::Idbd { theta } if !(theta > 0.0) => {
                fail(format!("idbd meta rate must be positive, got {theta}"))
            }
            _ => Ok(()),
        }
    }

    /// True for rules that are pure functions of the visit count.
    pub fn is_deterministic(&self) -> bool {
        matches!(
            self,
            RuleKind::OneOverN
                | RuleKind::Constant { .. }
                | RuleKind::Polynomial { .. }
                | RuleKind::Harmonic { .. }
        )
    }

    /// Parses a `name(:key=value)*` rule spec. The canonical names are
    /// `1overN`, `constant`, `polynomial`, `harmonic`, `mcclain`, `bakf`,
    /// `idbd`, `osavi`, and `osavi-finite`.
    pub fn parse(spec: &str) -> Result<RuleKind> {
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or_default();
        let mut params = Vec::new();
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::ParseRule(format!("expected key=value, got `{part}`")))?;
            let value: f64 = value.parse().map_err(|_| {
                Error::ParseRule(format!("parameter `{key}` has non-numeric value `{value}`"))
            })?;
            params.push((key, value));
        }
        let mut take = |expected: &str| -> Result<f64> {
            match params.len() {
                1 if params[0].0 == expected => Ok(params.remove(0).1),
                _ => Err(Error::ParseRule(format!(
                    "rule `{name}` takes exactly one parameter `{expected}`"
                ))),
            }
        };
        let kind = match name {
            "1overN" => {
                if !params.is_empty() {
                    return Err(Error::ParseRule("rule `1overN` takes no parameters".into()));
                }
                RuleKind::OneOverN
            }
            "constant" => RuleKind::Constant { alpha: take("alpha")? },
            "polynomial" => RuleKind::Polynomial { beta: take("beta")? },
            "harmonic" => RuleKind::Harmonic { a: take("a")? },
            "mcclain" => RuleKind::McClain { target: take("abar")? },
            "bakf" => RuleKind::Bakf { nu: take("nu")? },
            "idbd" => RuleKind::Idbd { theta: take("theta")? },
            "osavi" => RuleKind::OsaviInfinite { nu: take("nu")? },
            "osavi-finite" => RuleKind::OsaviFinite { nu: take("nu")? },
            other => return Err(Error::ParseRule(format!("unknown rule `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RuleKind::OneOverN => write!(f, "1overN"),
            RuleKind::Constant { alpha } => write!(f, "constant:alpha={alpha}"),
            RuleKind::Polynomial { beta } => write!(f, "polynomial:beta={beta}"),
            RuleKind::Harmonic { a } => write!(f, "harmonic:a={a}"),
            RuleKind::McClain { target } => write!(f, "mcclain:abar={target}"),
            RuleKind::Bakf { nu } => write!(f, "bakf:nu={nu}"),
            RuleKind::Idbd { theta } => write!(f, "idbd:theta={theta}"),
            RuleKind::OsaviInfinite { nu } => write!(f, "osavi:nu={nu}"),
            RuleKind::OsaviFinite { nu } => write!(f, "osavi-finite:nu={nu}"),
        }
    }
}

/// Stepsize for a deterministic rule at 1-based count `n`.
///
/// `visit_count`, when given, replaces `n` (state-dependent mode in the
/// tabular labs). McClain's rule is a recursion, not a function of `n`;
/// requesting it here signals misuse.
pub fn deterministic_alpha(kind: &RuleKind, n: u64, visit_count: Option<u64>) -> Result<f64> {
    let n = visit_count.unwrap_or(n);
    if n == 0 {
        return Err(Error::InvalidParameter("iteration count must be positive".into()));
    }
    kind.validate()?;
    match *kind {
        RuleKind::OneOverN => Ok(1.0 / n as f64),
        RuleKind::Constant { alpha } => Ok(alpha),
        RuleKind::Polynomial { beta } => Ok((n as f64).powf(-beta)),
        RuleKind::Harmonic { a } => Ok(a / (a + n as f64)),
        RuleKind::McClain { .. } => Err(Error::InvalidParameter(
            "mcclain is sequential; use mcclain_step".into(),
        )),
        _ => Err(Error::InvalidParameter(format!("rule `{kind}` is not deterministic"))),
    }
}

/// One step of McClain's recursion: 1 at n = 1, then
/// αₙ = αₙ₋₁ / (1 + αₙ₋₁ − ᾱ), which decreases monotonically toward the
/// fixed point ᾱ.
pub fn mcclain_step(alpha_prev: f64, abar: f64, n: u64) -> Result<f64> {
    if !(abar > 0.0 && abar < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mcclain limit point must be in (0,1), got {abar}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("iteration count must be positive".into()));
    }
    if n == 1 {
        return Ok(1.0);
    }
    if !(alpha_prev > 0.0 && alpha_prev <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "previous stepsize must be in (0,1], got {alpha_prev}"
        )));
    }
    Ok(alpha_prev / (1.0 + alpha_prev - abar))
}

/// Closed-form BAKF stepsize given the ζ multiplier, the (estimated) bias,
/// and the (estimated) observation noise variance.
pub fn bakf_alpha(zeta: f64, bias: f64, noise_var: f64) -> f64 {
    let den = (1.0 + zeta) * noise_var + bias * bias;
    if den <= 0.0 {
        1.0
    } else {
        1.0 - noise_var / den
    }
}

/// Recursion state for the bias-adjusted Kalman filter stepsize.
///
/// The bias is estimated by smoothing the raw prediction errors with ν̄, the
/// noise variance by smoothing the squared errors and subtracting the squared
/// bias estimate (floored at zero). ζ follows
/// `ζⁿ = αₙ₋₁² + (1 − αₙ₋₁)² ζⁿ⁻¹` from the base case ζ¹ = α₀², and stays in
/// `[0,1]` whenever α₀ does.
#[derive(Debug, Clone, Copy)]
pub struct BakfState {
    zeta: f64,
    bias_bar: f64,
    sq_err_bar: f64,
    alpha_prev: f64,
    n: u64,
}

impl Default for BakfState {
    fn default() -> Self {
        Self::new()
    }
}

impl BakfState {
    pub fn new() -> Self {
        BakfState { zeta: 0.0, bias_bar: 0.0, sq_err_bar: 0.0, alpha_prev: 1.0, n: 0 }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn bias_bar(&self) -> f64 {
        self.bias_bar
    }

    /// Smoothed noise-variance estimate (bias-corrected, nonnegative).
    pub fn noise_var(&self) -> f64 {
        (self.sq_err_bar - self.bias_bar * self.bias_bar).max(0.0)
    }

    pub fn alpha_prev(&self) -> f64 {
        self.alpha_prev
    }

    /// Folds in one prediction error and returns the stepsize for this
    /// update. The first call forces α₀ = 1 so the initial approximation is
    /// overwritten.
    pub fn update(&mut self, v_hat: f64, v_bar_prev: f64, nu_bar: f64) -> Result<f64> {
        if !(nu_bar > 0.0 && nu_bar <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "secondary stepsize must be in (0,1], got {nu_bar}"
            )));
        }
        let err = v_hat - v_bar_prev;
        self.bias_bar = (1.0 - nu_bar) * self.bias_bar + nu_bar * err;
        self.sq_err_bar = (1.0 - nu_bar) * self.sq_err_bar + nu_bar * err * err;
        let alpha = if self.n == 0 {
            1.0
        } else {
            bakf_alpha(self.zeta, self.bias_bar, self.noise_var())
        };
        self.zeta = if self.n == 0 {
            alpha * alpha
        } else {
            alpha * alpha + (1.0 - alpha) * (1.0 - alpha) * self.zeta
        };
        self.alpha_prev = alpha;
        self.n += 1;
        Ok(alpha)
    }
}

/// Recursion state for incremental Delta-Bar-Delta.
///
/// Holds the log-stepsize Δ and the error trace h; each update applies
/// `Δₙ = Δₙ₋₁ + θ (v̂ − v̄) hₙ₋₁`, takes `α = min(1, exp(Δₙ))`, then decays
/// the trace with `hₙ = (1−α) hₙ₋₁ + α (v̂ − v̄)`. Initialized at Δ₀ = 0,
/// h₀ = 0, so the first stepsize is 1.
#[derive(Debug, Clone, Copy)]
pub struct IdbdState {
    log_alpha: f64,
    trace: f64,
    theta: f64,
}

impl IdbdState {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "idbd meta rate must be positive, got {theta}"
            )));
        }
        Ok(IdbdState { log_alpha: 0.0, trace: 0.0, theta })
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Folds in one prediction error and returns the stepsize. The min-clamp
    /// keeps α in (0,1] even when the exponential overflows.
    pub fn update(&mut self, v_hat: f64, v_bar_prev: f64) -> f64 {
        let err = v_hat - v_bar_prev;
        self.log_alpha += self.theta * err * self.trace;
        let alpha = self.log_alpha.exp().min(1.0);
        self.trace = (1.0 - alpha) * self.trace + alpha * err;
        alpha
    }
}

/// Observation context handed to a rule when an estimate is updated.
#[derive(Debug, Clone, Copy)]
pub struct RuleObs {
    pub v_hat: f64,
    pub v_bar_prev: f64,
    /// 1-based count of updates to this estimate, including the current one.
    pub entry_count: u64,
    /// 1-based count of visits to the owning state. Equals `entry_count` in
    /// single-estimate settings; the harmonic rule keys on this count in the
    /// tabular labs.
    pub state_count: u64,
}

impl RuleObs {
    /// Context for a single-estimate setting where both counts coincide.
    pub fn single(v_hat: f64, v_bar_prev: f64, n: u64) -> Self {
        RuleObs { v_hat, v_bar_prev, entry_count: n, state_count: n }
    }
}

/// Per-estimate stepsize engine: owns whatever recursion state the selected
/// rule needs. One engine per estimated quantity, single writer.
#[derive(Debug, Clone)]
pub enum RuleEngine {
    Deterministic(RuleKind),
    McClain { target: f64, alpha_prev: f64 },
    Bakf { nu: f64, state: BakfState },
    Idbd(IdbdState),
    /// Plug-in error-minimizing rule; reward statistics are supplied by the
    /// caller (system-wide in multi-state problems).
    OsaviPlugin { state: OsaviState },
    /// Known-parameter variant used by diagnostics and reductions.
    OsaviKnown { c: f64, sigma_sq: f64, state: OsaviState },
}

impl RuleEngine {
    /// Engine for a parsed rule. The finite-horizon rule needs per-period
    /// machinery and is rejected here.
    pub fn from_kind(kind: &RuleKind) -> Result<Self> {
        kind.validate()?;
        Ok(match *kind {
            RuleKind::McClain { target } => RuleEngine::McClain { target, alpha_prev: 1.0 },
            RuleKind::Bakf { nu } => RuleEngine::Bakf { nu, state: BakfState::new() },
            RuleKind::Idbd { theta } => RuleEngine::Idbd(IdbdState::new(theta)?),
            RuleKind::OsaviInfinite { .. } => RuleEngine::OsaviPlugin { state: OsaviState::new() },
            RuleKind::OsaviFinite { .. } => {
                return Err(Error::InvalidParameter(
                    "osavi-finite requires a finite-horizon loop".into(),
                ))
            }
            deterministic => RuleEngine::Deterministic(deterministic),
        })
    }

    /// Known-parameter error-minimizing engine.
    pub fn osavi_known(c: f64, sigma_sq: f64) -> Self {
        RuleEngine::OsaviKnown { c, sigma_sq, state: OsaviState::new() }
    }

    /// Stepsize for this observation, advancing the internal recursion.
    ///
    /// `stats` carries the shared reward statistics and is required by the
    /// plug-in rule only.
    pub fn alpha(&mut self, obs: RuleObs, gamma: f64, stats: Option<&RewardStats>) -> Result<f64> {
        match self {
            RuleEngine::Deterministic(kind) => {
                // State-dependent mode: the harmonic rule counts state
                // visits, averaging rules count updates to the entry itself.
                let count = match kind {
                    RuleKind::Harmonic { .. } => obs.state_count,
                    _ => obs.entry_count,
                };
                deterministic_alpha(kind, count, None)
            }
            RuleEngine::McClain { target, alpha_prev } => {
                let alpha = mcclain_step(*alpha_prev, *target, obs.entry_count)?;
                *alpha_prev = alpha;
                Ok(alpha)
            }
            RuleEngine::Bakf { nu, state } => state.update(obs.v_hat, obs.v_bar_prev, *nu),
            RuleEngine::Idbd(state) => Ok(state.update(obs.v_hat, obs.v_bar_prev)),
            RuleEngine::OsaviPlugin { state } => {
                let stats = stats.ok_or_else(|| {
                    Error::InvalidParameter("plug-in rule requires reward statistics".into())
                })?;
                let alpha = state.alpha_plugin(gamma, stats);
                state.moments_update(alpha, gamma)?;
                Ok(alpha)
            }
            RuleEngine::OsaviKnown { c, sigma_sq, state } => {
                let alpha = state.alpha_known(gamma, *c, *sigma_sq);
                state.moments_update(alpha, gamma)?;
                Ok(alpha)
            }
        }
    }
}
