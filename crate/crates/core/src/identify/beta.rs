//! Root of `F(β) = d₁^{−β} + d₂^{−β} − a^{−β} − b^{−β} − c^{−β} + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA_LO: f64 = 1e-4;
pub const BETA_HI: f64 = 64.0;
/// Furthest the upper bracket end is pushed before giving up.
pub const BETA_MAX: f64 = (1u64 << 20) as f64;
/// Slack on the non-strict ordering hypotheses, absorbing rounding in
/// extracted values.
pub const HYPOTHESIS_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSolution {
    pub beta: f64,
    pub iterations: usize,
    /// Final bracket `[lo, hi]` around the root.
    pub bracket: [f64; 2],
    /// `|F(β)|` at the returned root.
    pub residual: f64,
}

/// `F(β)` as written.
pub fn beta_objective(beta: f64, v: [f64; 5]) -> f64 {
    let [d1, d2, a, b, c] = v;
    d1.powf(-beta) + d2.powf(-beta) - a.powf(-beta) - b.powf(-beta) - c.powf(-beta) + 1.0
}

// F(β)·m^β with m the smallest input: same sign as F, every term bounded by
// one, so large β cannot overflow.
fn scaled(beta: f64, v: [f64; 5]) -> f64 {
    let m = v.iter().copied().fold(1.0f64, f64::min);
    let [d1, d2, a, b, c] = v.map(|x| (m / x).powf(beta));
    d1 + d2 - a - b - c + m.powf(beta)
}

/// Unique positive root, given `c ≥ a ≥ d₁ > 0` and `c ≥ b > d₂ > 0`.
pub fn solve_beta(d1: f64, d2: f64, a: f64, b: f64, c: f64) -> Result<BetaSolution> {
    let v = [d1, d2, a, b, c];
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0 && *x <= 1.0 + HYPOTHESIS_SLACK)) {
        return Err(Error::validation(format!("values {v:?} must lie in (0, 1]")));
    }
    if v.iter().all(|x| (x - d1).abs() <= HYPOTHESIS_SLACK) {
        return Err(Error::DegenerateBeta("all five values are equal; beta is not determined".into()));
    }
    let s = HYPOTHESIS_SLACK;
    if !(c + s >= a && a + s >= d1 && c + s >= b && b > d2) {
        return Err(Error::validation(format!(
            "ordering hypotheses c >= a >= d1 > 0, c >= b > d2 > 0 fail for (d1, d2, a, b, c) = {v:?}"
        )));
    }

    let lo0 = BETA_LO;
    if scaled(lo0, v) >= 0.0 {
        return Err(Error::DegenerateBeta(format!(
            "F(beta) has no sign change above beta = {lo0} (alpha would exceed {})",
            1.0 / lo0
        )));
    }
    let mut hi = BETA_HI;
    let mut lo = lo0;
    let mut iterations = 0;
    while scaled(hi, v) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if hi > BETA_MAX {
            return Err(Error::DegenerateBeta(format!("no sign change of F(beta) on (0, {BETA_MAX}]")));
        }
    }
    // bisect until the bracket is tight and F is small, or the bracket
    // cannot shrink further in floating point
    loop {
        let mid = 0.5 * (lo + hi);
        let tight = hi - lo <= 1e-12 * hi;
        if tight && beta_objective(mid, v).abs() < 1e-13 {
            break;
        }
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let f = scaled(mid, v);
        if f == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    Ok(BetaSolution { beta, iterations, bracket: [lo, hi], residual: beta_objective(beta, v).abs() })
}
