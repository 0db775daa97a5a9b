//! Small worked counterexamples: a curve whose inflections contradict a
//! published graphical argument, the fibers of a toy map that is generically
//! but not globally injective, and two different binary-state parameter sets
//! with the same three-taxon distribution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{gauss_legendre, joint3_exact};
use crate::model::{mgf_gamma, mgf_gamma_inverse, GammaRates, GtrModel, StateDistribution, TripleTree};

/// Absolute error target for the adaptive rule.
pub const F_TOL: f64 = 1e-10;
/// Sign changes of the discrete curvature smaller than this times the
/// largest curvature magnitude are ignored.
pub const INFLECTION_DEADBAND: f64 = 1e-9;
pub const MIN_CURVE_POINTS: usize = 16;
pub const DEFAULT_X_MAX: f64 = 3.0;

/// `f'(t) = exp(exp(−10(t−1)²) − (1−t)²/10)`.
pub fn rogers_integrand(t: f64) -> f64 {
    let s = (t - 1.0) * (t - 1.0);
    ((-10.0 * s).exp() - s / 10.0).exp()
}

// An interval with its end and midpoint values and Simpson estimate.
#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> Self {
        Self { a, b, fa, fm, fb, whole: (b - a) / 6.0 * (fa + 4.0 * fm + fb) }
    }
}

fn simpson(f: &impl Fn(f64) -> f64, p: Panel, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (p.a + p.b);
    let left = Panel::new(p.a, m, p.fa, f(0.5 * (p.a + m)), p.fm);
    let right = Panel::new(m, p.b, p.fm, f(0.5 * (m + p.b)), p.fb);
    let diff = left.whole + right.whole - p.whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left.whole + right.whole + diff / 15.0;
    }
    simpson(f, left, 0.5 * tol, depth - 1) + simpson(f, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let p = Panel::new(a, b, f(a), f(0.5 * (a + b)), f(b));
    simpson(&f, p, tol, 50)
}

/// `f(x) = ∫₀ˣ f'(t) dt`, adaptive Simpson.
pub fn rogers_f(x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::validation(format!("f needs x >= 0, got {x}")));
    }
    // split at the bump so the adaptive rule sees it
    if x <= 1.0 {
        return Ok(adaptive_simpson(rogers_integrand, 0.0, x, F_TOL));
    }
    Ok(adaptive_simpson(rogers_integrand, 0.0, 1.0, 0.5 * F_TOL)
        + adaptive_simpson(rogers_integrand, 1.0, x, 0.5 * F_TOL))
}

/// Independent evaluation of `f` by composite Gauss–Legendre (20 nodes on
/// panels of width ≤ 1/32); used to cross-check [`rogers_f`].
pub fn rogers_f_gauss(x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::validation(format!("f needs x >= 0, got {x}")));
    }
    let (nodes, weights) = gauss_legendre(20);
    let panels = ((x * 32.0).ceil() as usize).max(1);
    let h = x / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        sum += nodes.iter().zip(&weights).map(|(s, w)| w * rogers_integrand(mid + 0.5 * h * s)).sum::<f64>();
    }
    Ok(0.5 * h * sum)
}

// f at sorted points by summing panel integrals, so neighbouring values share
// all but one panel and differences stay smooth.
fn f_cumulative(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &x in xs {
        if x > 1.0 && prev < 1.0 {
            acc += adaptive_simpson(rogers_integrand, prev, 1.0, 1e-14);
            prev = 1.0;
        }
        acc += adaptive_simpson(rogers_integrand, prev, x, 1e-14);
        prev = x;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarCurve {
    points: Vec<(f64, f64)>,
}

impl PlanarCurve {
    /// Requires strictly increasing `x`.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(Error::validation("curve points must be finite"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::validation("curve x coordinates must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with the given two column names, 17 significant digits.
    pub fn to_csv(&self, header: [&str; 2]) -> String {
        let mut s = format!("{},{}\n", header[0], header[1]);
        for (x, y) in &self.points {
            s.push_str(&format!("{x:.16e},{y:.16e}\n"));
        }
        s
    }
}

fn uniform_grid(x_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(x_max.is_finite() && x_max > 0.0) || n < 2 {
        return Err(Error::validation("grid needs x_max > 0 and at least 2 points"));
    }
    Ok((0..n).map(|i| x_max * i as f64 / (n - 1) as f64).collect())
}

/// Points `(x_i, f(x_i))` on a uniform grid over `[0, x_max]`.
pub fn graph_points(x_max: f64, n: usize) -> Result<PlanarCurve> {
    let xs = uniform_grid(x_max, n)?;
    let fx = f_cumulative(&xs);
    PlanarCurve::new(xs.into_iter().zip(fx).collect())
}

/// Points `(f(τ₁x_i), f(τ₂x_i))` on a uniform grid over `[0, x_max]`.
pub fn curve_points(tau1: f64, tau2: f64, x_max: f64, n: usize) -> Result<PlanarCurve> {
    if !(tau1 > 0.0 && tau2 >= tau1 && tau2.is_finite()) {
        return Err(Error::validation(format!("need tau2 >= tau1 > 0, got ({tau1}, {tau2})")));
    }
    let xs = uniform_grid(x_max, n)?;
    let f1 = f_cumulative(&xs.iter().map(|x| tau1 * x).collect::<Vec<_>>());
    let f2 = f_cumulative(&xs.iter().map(|x| tau2 * x).collect::<Vec<_>>());
    PlanarCurve::new(f1.into_iter().zip(f2).collect())
}

/// Sign changes of the second divided difference of `y` in `x`, with a
/// relative dead-band.
pub fn count_inflections(curve: &PlanarCurve) -> Result<usize> {
    let p = curve.points();
    if p.len() < MIN_CURVE_POINTS {
        return Err(Error::validation(format!(
            "need at least {MIN_CURVE_POINTS} points to count inflections, got {}",
            p.len()
        )));
    }
    let dd: Vec<f64> = p
        .windows(3)
        .map(|w| {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            2.0 * (s2 - s1) / (w[2].0 - w[0].0)
        })
        .collect();
    let scale = dd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = INFLECTION_DEADBAND * scale;
    let mut last = 0.0f64;
    let mut changes = 0;
    for &v in dd.iter().filter(|v| v.abs() > cut) {
        if last != 0.0 && v.signum() != last.signum() {
            changes += 1;
        }
        last = v;
    }
    Ok(changes)
}

/// Preimage of `(x, y)` under `φ(a, b) = (a, ab)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fiber", rename_all = "snake_case")]
pub enum PhiFiber {
    Unique {
        a: f64,
        b: f64,
    },
    /// `{(0, b) : b ∈ ℝ}`.
    Line,
    Empty,
}

pub fn phi_fiber_demo(x: f64, y: f64) -> PhiFiber {
    if x != 0.0 {
        PhiFiber::Unique { a: x, b: y / x }
    } else if y == 0.0 {
        PhiFiber::Line
    } else {
        PhiFiber::Empty
    }
}

/// The symmetric two-state model; its nonzero eigenvalue is −2.
pub fn binary_symmetric_model() -> GtrModel {
    let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    GtrModel::from_exchangeabilities(&s, StateDistribution::uniform(2)).expect("valid two-state model")
}

const BINARY_LAMBDA: f64 = -2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryWitness {
    pub alpha: f64,
    pub t: TripleTree,
    pub alpha_alt: f64,
    pub t_alt: TripleTree,
    /// Largest entrywise difference between the two joint distributions.
    pub max_tensor_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WitnessOutcome {
    Witness(BinaryWitness),
    /// The matching pairwise sums do not split into nonnegative lengths.
    Infeasible {
        alpha_alt: f64,
        implied: [f64; 3],
    },
}

/// For the symmetric two-state model, finds `t'` such that `(α', t')` gives
/// the same three-taxon distribution as `(α, t)`.
pub fn binary_nonident_witness(alpha: f64, t: TripleTree, alpha_alt: f64) -> Result<WitnessOutcome> {
    let [ta, tb, tc] = t.lengths();
    let sums = [ta + tb, ta + tc, tb + tc];
    let mut alt = [0.0; 3];
    for (k, s) in sums.iter().enumerate() {
        let v = mgf_gamma(alpha, BINARY_LAMBDA * s)?;
        alt[k] = mgf_gamma_inverse(alpha_alt, v)? / BINARY_LAMBDA;
    }
    let implied =
        [0.5 * (alt[0] + alt[1] - alt[2]), 0.5 * (alt[0] + alt[2] - alt[1]), 0.5 * (alt[1] + alt[2] - alt[0])];
    let clean = implied.map(|x| if x.abs() <= 1e-14 { 0.0 } else { x });
    let t_alt = match TripleTree::new(clean[0], clean[1], clean[2]) {
        Ok(t) if clean.iter().all(|x| *x >= 0.0) => t,
        _ => return Ok(WitnessOutcome::Infeasible { alpha_alt, implied }),
    };
    let model = binary_symmetric_model();
    let p = joint3_exact(&model, &GammaRates::new(alpha)?, &t)?;
    let q = joint3_exact(&model, &GammaRates::new(alpha_alt)?, &t_alt)?;
    let max_tensor_diff = p.max_abs_diff(&q).ok_or_else(|| Error::Internal("tensor shapes differ".into()))?;
    Ok(WitnessOutcome::Witness(BinaryWitness { alpha, t, alpha_alt, t_alt, max_tensor_diff }))
}
