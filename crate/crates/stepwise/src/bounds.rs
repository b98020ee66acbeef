//! How slowly `1/n` smoothing converges, quantified.
//!
//! With deterministic rewards `c`, discount `γ ∈ (0,1)`, and the `1/n`
//! stepsize, the smoothed estimate obeys
//!
//! ```text
//! v̄ⁿ⁺¹ − v̄ⁿ = (c − (1−γ) v̄ⁿ) / (n+1),      v̄⁰ = 0,
//! ```
//!
//! climbing toward `v* = c/(1−γ)`. Extending the iterates to real `n` by
//! piecewise-linear interpolation and comparing against the solutions of the
//! enveloping differential equations yields closed-form envelopes:
//!
//! ```text
//! v* (1 − (n+1)^(−(1−γ)))   ≤   v̄(n)   ≤   v* (1 − b n^(−(1−γ)) − ((1−γ)/γ)/n)
//! ```
//!
//! with the integration constant `b` anchored so the upper envelope touches
//! the curve at `n₀` (see [`upper_bound_coeff`]). Inverting the envelopes
//! gives two-sided estimates of how many iterations are needed to reach a
//! fraction of `v*` — numbers that reach 10¹⁹ for γ ≥ 0.9, which is what
//! rules the `1/n` stepsize out for discounted problems.

use crate::error::{Error, Result};

/// Iterates are memoized up to this index; queries beyond it stream from a
/// frontier cache without storing.
const MEMO_CAP: usize = 1 << 22;

/// Iterating the exact recursion beyond this point is not worth the runtime;
/// queries fall back to the analytic envelopes and are flagged.
const DIRECT_LIMIT: u64 = 1_000_000_000;

/// Result of querying the exact curve: an iterate (or interpolated value), or
/// an analytic bracket when the index is beyond [`DIRECT_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vbar {
    Exact(f64),
    Bracketed { lower: f64, upper: f64 },
}

/// Exact iterates of the deterministic `1/n` recursion, with memoization and
/// piecewise-linear interpolation between integer indices.
///
/// Single-writer: queries take `&mut self` to extend the memo. Clone cheaply
/// communicates a consistent snapshot to other threads.
#[derive(Debug, Clone)]
pub struct VbarCurve {
    c: f64,
    gamma: f64,
    iterates: Vec<f64>,
    /// Most recent iterate beyond the memo cap, for streaming queries.
    frontier: (u64, f64),
}

impl VbarCurve {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in [0,1), got {gamma}"
            )));
        }
        Ok(VbarCurve { c, gamma, iterates: vec![0.0], frontier: (0, 0.0) })
    }

    #[inline]
    fn step(&self, n: u64, v: f64) -> f64 {
        v + (self.c - (1.0 - self.gamma) * v) / (n + 1) as f64
    }

    fn extend_memo_to(&mut self, n: usize) {
        while self.iterates.len() <= n {
            let k = self.iterates.len() as u64 - 1;
            let v = *self.iterates.last().unwrap();
            self.iterates.push(self.step(k, v));
        }
    }

    /// Exact iterate for `n ≤ 10⁹`; analytic bracket beyond that.
    pub fn vbar(&mut self, n: u64) -> Vbar {
        if n > DIRECT_LIMIT {
            let v_star = self.c / (1.0 - self.gamma);
            let lower = lower_bound(n as f64, self.c, self.gamma);
            let upper = if self.gamma > 0.0 {
                let anchor = self.value(1);
                upper_bound(n as f64, self.c, self.gamma, 1.0, anchor).unwrap_or(v_star)
            } else {
                v_star
            };
            return Vbar::Bracketed { lower, upper };
        }
        Vbar::Exact(self.value(n))
    }

    /// Exact iterate; `n` must be within the direct-iteration range.
    pub fn value(&mut self, n: u64) -> f64 {
        assert!(n <= DIRECT_LIMIT, "iterate index beyond direct range");
        if n < MEMO_CAP as u64 {
            self.extend_memo_to(n as usize);
            return self.iterates[n as usize];
        }
        // Stream forward from the frontier (or the memo edge) without
        // storing; monotone query patterns cost one pass in total.
        let (mut k, mut v) = if self.frontier.0 <= n && self.frontier.0 >= MEMO_CAP as u64 {
            self.frontier
        } else {
            self.extend_memo_to(MEMO_CAP - 1);
            ((MEMO_CAP - 1) as u64, self.iterates[MEMO_CAP - 1])
        };
        while k < n {
            v = self.step(k, v);
            k += 1;
        }
        self.frontier = (k, v);
        v
    }

    /// Piecewise-linear interpolation between integer iterates; exact at
    /// integers.
    pub fn interp(&mut self, x: f64) -> f64 {
        assert!(x >= 0.0, "interpolation point must be nonnegative");
        let floor = x.floor();
        let frac = x - floor;
        let lo = self.value(floor as u64);
        if frac == 0.0 {
            return lo;
        }
        let hi = self.value(floor as u64 + 1);
        lo + frac * (hi - lo)
    }
}

/// Closed-form lower envelope of the `1/n` curve; tends to `c/(1−γ)`.
pub fn lower_bound(n: f64, c: f64, gamma: f64) -> f64 {
    c / (1.0 - gamma) * (1.0 - (n + 1.0).powf(-(1.0 - gamma)))
}

/// Integration constant anchoring the upper envelope at `(n0, vbar_n0)`.
///
/// At `n0 = 1` this is `(γ² + γ − 1)/γ`, which is positive only for
/// `γ > (√5 − 1)/2 ≈ 0.618`; larger anchors raise `b` and tighten the bound.
pub fn upper_bound_coeff(c: f64, gamma: f64, n0: f64, vbar_n0: f64) -> f64 {
    n0.powf(1.0 - gamma) * (1.0 - (1.0 - gamma) / (n0 * gamma) - (1.0 - gamma) / c * vbar_n0)
}

/// Closed-form upper envelope anchored at `n0`, capped at the trivial limit
/// `c/(1−γ)` (the cap is what remains useful when the coefficient `b` is
/// negative). Valid for `n ≥ n0 ≥ 1`.
pub fn upper_bound(n: f64, c: f64, gamma: f64, n0: f64, vbar_n0: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "discount factor must be in (0,1), got {gamma}"
        )));
    }
    if n0 < 1.0 || n < n0 {
        return Err(Error::InvalidParameter(format!("need n >= n0 >= 1, got n={n}, n0={n0}")));
    }
    let v_star = c / (1.0 - gamma);
    let b = upper_bound_coeff(c, gamma, n0, vbar_n0);
    let raw = v_star * (1.0 - b * n.powf(-(1.0 - gamma)) - (1.0 - gamma) / gamma / n);
    Ok(raw.min(v_star))
}

/// Parameters for the envelope-inversion queries.
#[derive(Debug, Clone, Copy)]
pub struct BoundsConfig {
    /// Deterministic per-iteration reward, `c > 0`.
    pub c: f64,
    /// Discount factor in (0,1).
    pub gamma: f64,
    /// Anchor for the upper envelope, `n0 ≥ 1`.
    pub n0: f64,
    /// Fraction of `v*` to reach, e.g. 0.99 for "within 1%".
    pub threshold_frac: f64,
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount factor must be in (0,1), got {}",
                self.gamma
            )));
        }
        if !(self.n0 >= 1.0) {
            return Err(Error::InvalidParameter(format!("n0 must be >= 1, got {}", self.n0)));
        }
        if !(self.threshold_frac > 0.0 && self.threshold_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold fraction must be in (0,1), got {}",
                self.threshold_frac
            )));
        }
        Ok(())
    }
}

/// Two-sided iteration counts for reaching `frac · v*` under `1/n`.
///
/// `iters_upper` comes from the lower envelope (so it upper-bounds the
/// iterations needed); `iters_lower` from the upper envelope. `iters_lower`
/// is `+∞` when the capped envelope never crosses the threshold within the
/// search range.
#[derive(Debug, Clone, Copy)]
pub struct IterationsToFraction {
    pub iters_upper: f64,
    pub iters_lower: f64,
}

/// Upper-envelope inversions span ~20 orders of magnitude, so the bisection
/// runs in log space up to this limit.
const BISECT_MAX: f64 = 1e30;

pub fn iterations_to_fraction(cfg: &BoundsConfig) -> Result<IterationsToFraction> {
    cfg.validate()?;
    let v_star = cfg.c / (1.0 - cfg.gamma);
    let target = cfg.threshold_frac * v_star;

    // The lower envelope inverts in closed form:
    // 1 − (n+1)^(−(1−γ)) = frac  ⇒  n = (1−frac)^(−1/(1−γ)) − 1.
    let iters_upper = (1.0 - cfg.threshold_frac).powf(-1.0 / (1.0 - cfg.gamma)) - 1.0;

    let mut curve = VbarCurve::new(cfg.c, cfg.gamma)?;
    let anchor = curve.interp(cfg.n0);
    let gap =
        |n: f64| -> Result<f64> { Ok(upper_bound(n, cfg.c, cfg.gamma, cfg.n0, anchor)? - target) };

    let iters_lower = if gap(cfg.n0)? >= 0.0 {
        // Degenerate anchor (possible for small γ where b ≤ 0): the envelope
        // is already past the threshold, so it bounds nothing beyond n0.
        cfg.n0
    } else if gap(BISECT_MAX)? < 0.0 {
        f64::INFINITY
    } else {
        let mut lo = cfg.n0.ln();
        let mut hi = BISECT_MAX.ln();
        // Relative tolerance 1e-6 on n, i.e. absolute 1e-6 on ln n.
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if gap(mid.exp())? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    };

    Ok(IterationsToFraction { iters_upper, iters_lower })
}
