//! GTR+Γ parameters: state frequencies, reversible rate matrices, their
//! spectral form, and the Γ moment generating function.

mod mgf;
mod nu;
pub(crate) mod spectral;

pub use mgf::{mgf_gamma, mgf_gamma_inverse};
pub use nu::{nu_tensor, NuTensor};
pub use spectral::{spectral_decompose, SpectralForm};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the probability-vector and rate-matrix invariants.
pub const INVARIANT_TOL: f64 = 1e-12;

/// Stationary distribution π: strictly positive, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.len() < 2 {
            return Err(Error::validation("need at least two states"));
        }
        if let Some(p) = pi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::validation(format!("state frequency {p} is not positive")));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::validation(format!("state frequencies sum to {sum}")));
        }
        Ok(Self(pi))
    }

    /// Rescales positive weights to sum to one.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::validation("weights must have a positive finite sum"));
        }
        Self::new(w.iter().map(|x| x / s).collect())
    }

    pub fn uniform(kappa: usize) -> Self {
        Self(vec![1.0 / kappa as f64; kappa])
    }

    pub fn kappa(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The same distribution with states relabelled: entry `s` of the result
    /// is entry `perm[s]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&s| self.0[s]).collect())
    }
}

impl std::ops::Index<usize> for StateDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for StateDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StateDistribution> for Vec<f64> {
    fn from(p: StateDistribution) -> Self {
        p.0
    }
}

/// Shape of the mean-one Γ rate distribution (scale fixed at `1/alpha`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRates {
    alpha: f64,
}

impl GammaRates {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::validation(format!("gamma shape {alpha} must be positive")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `E[exp(r u)]` for `u ≤ 0`; callers guarantee the sign.
    #[inline]
    pub(crate) fn mgf(&self, u: f64) -> f64 {
        (-self.alpha * (-u / self.alpha).ln_1p()).exp()
    }
}

/// Pendant edge lengths of the three-taxon star.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleTree {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
}

impl TripleTree {
    pub fn new(t_a: f64, t_b: f64, t_c: f64) -> Result<Self> {
        let t = [t_a, t_b, t_c];
        if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::validation(format!("edge lengths {t:?} must be nonnegative")));
        }
        if t.iter().filter(|x| **x == 0.0).count() > 1 {
            return Err(Error::validation("two taxa at total distance 0: at most one edge may have length 0"));
        }
        Ok(Self { t_a, t_b, t_c })
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.t_a, self.t_b, self.t_c]
    }
}

/// A reversible rate matrix in the trace(diag(π)Q) = −1 gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct GtrRateMatrix {
    q: DMatrix<f64>,
}

impl GtrRateMatrix {
    /// Validates every invariant, including the normalization.
    pub fn new(q: DMatrix<f64>, pi: &StateDistribution) -> Result<Self> {
        check_rate_matrix(&q, pi)?;
        let tr = normalization_trace(&q, pi);
        if (tr + 1.0).abs() > INVARIANT_TOL {
            return Err(Error::validation(format!("trace(diag(pi) Q) = {tr}, expected -1")));
        }
        Ok(Self { q })
    }

    /// Validates a reversible rate matrix in any scale and rescales it into the
    /// normalized gauge. Returns the factor that was applied.
    pub fn normalized(q: DMatrix<f64>, pi: &StateDistribution) -> Result<(Self, f64)> {
        check_rate_matrix(&q, pi)?;
        let factor = -1.0 / normalization_trace(&q, pi);
        let q = q * factor;
        let q = symmetrize_reversible(&q, pi);
        Ok((Self { q }, factor))
    }

    pub fn kappa(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Builds `Q = U diag(λ) Uᵀ diag(π)`, the inverse of
    /// [`spectral_decompose`], then normalizes.
    pub fn from_spectrum(pi: &StateDistribution, lambdas: &[f64], u: &DMatrix<f64>) -> Result<(Self, f64)> {
        let k = pi.kappa();
        if lambdas.len() != k || u.nrows() != k || u.ncols() != k {
            return Err(Error::validation("spectrum dimensions do not match pi"));
        }
        let q = DMatrix::from_fn(k, k, |i, j| (0..k).map(|m| u[(i, m)] * lambdas[m] * u[(j, m)]).sum::<f64>() * pi[j]);
        Self::normalized(q, pi)
    }
}

fn normalization_trace(q: &DMatrix<f64>, pi: &StateDistribution) -> f64 {
    (0..pi.kappa()).map(|i| pi[i] * q[(i, i)]).sum()
}

// Restores exact row sums and exact symmetry of diag(π)Q after rescaling.
fn symmetrize_reversible(q: &DMatrix<f64>, pi: &StateDistribution) -> DMatrix<f64> {
    let k = q.nrows();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let flux = 0.5 * (pi[i] * q[(i, j)] + pi[j] * q[(j, i)]);
                out[(i, j)] = flux / pi[i];
            }
        }
        let row: f64 = (0..k).filter(|&j| j != i).map(|j| out[(i, j)]).sum();
        out[(i, i)] = -row;
    }
    out
}

fn check_rate_matrix(q: &DMatrix<f64>, pi: &StateDistribution) -> Result<()> {
    let k = pi.kappa();
    if q.nrows() != k || q.ncols() != k {
        return Err(Error::validation(format!("rate matrix is {}x{}, expected {k}x{k}", q.nrows(), q.ncols())));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("rate matrix has non-finite entries"));
    }
    let scale = q.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    for i in 0..k {
        let mut row = 0.0;
        for j in 0..k {
            row += q[(i, j)];
            if i != j {
                if q[(i, j)] <= 0.0 {
                    return Err(Error::validation(format!("off-diagonal rate q[{i}][{j}] is not positive")));
                }
                let asym = pi[i] * q[(i, j)] - pi[j] * q[(j, i)];
                if asym.abs() > INVARIANT_TOL * scale {
                    return Err(Error::validation(format!(
                        "diag(pi) Q is not symmetric at ({i},{j}): mismatch {asym:e}"
                    )));
                }
            }
        }
        if row.abs() > INVARIANT_TOL * scale * k as f64 {
            return Err(Error::validation(format!("row {i} of Q sums to {row:e}")));
        }
    }
    Ok(())
}

/// Builds a normalized GTR matrix from symmetric exchangeabilities:
/// `q_ij ∝ s_ij π_j` off the diagonal, rows summing to zero.
pub fn build_gtr(exchangeabilities: &DMatrix<f64>, pi: &StateDistribution) -> Result<GtrRateMatrix> {
    let k = pi.kappa();
    let s = exchangeabilities;
    if s.nrows() != k || s.ncols() != k {
        return Err(Error::validation(format!("exchangeabilities must be {k}x{k}")));
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            if !(s[(i, j)].is_finite() && s[(i, j)] > 0.0) {
                return Err(Error::validation(format!("exchangeability s[{i}][{j}] is not positive")));
            }
            if (s[(i, j)] - s[(j, i)]).abs() > INVARIANT_TOL * s[(i, j)].abs().max(1.0) {
                return Err(Error::validation(format!("exchangeabilities not symmetric at ({i},{j})")));
            }
        }
    }
    let mut q = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                // average the two triangles so diag(π)Q is symmetric to the last bit
                q[(i, j)] = 0.5 * (s[(i, j)] + s[(j, i)]) * pi[j];
            }
        }
        let row: f64 = (0..k).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -row;
    }
    Ok(GtrRateMatrix::normalized(q, pi)?.0)
}

/// A validated GTR model together with its spectral form.
#[derive(Debug, Clone)]
pub struct GtrModel {
    pub pi: StateDistribution,
    pub q: GtrRateMatrix,
    pub spectral: SpectralForm,
}

impl GtrModel {
    pub fn new(pi: StateDistribution, q: GtrRateMatrix) -> Result<Self> {
        let spectral = spectral_decompose(&q, &pi)?;
        Ok(Self { pi, q, spectral })
    }

    pub fn from_exchangeabilities(s: &DMatrix<f64>, pi: StateDistribution) -> Result<Self> {
        let q = build_gtr(s, &pi)?;
        Self::new(pi, q)
    }

    pub fn kappa(&self) -> usize {
        self.pi.kappa()
    }

    /// The model with states relabelled so that new state `s` is old state
    /// `perm[s]`.
    pub fn permuted_states(&self, perm: &[usize]) -> Result<Self> {
        let pi = self.pi.permuted(perm);
        let k = self.kappa();
        let qm = self.q.matrix();
        let q = DMatrix::from_fn(k, k, |i, j| qm[(perm[i], perm[j])]);
        let q = GtrRateMatrix::normalized(q, &pi)?.0;
        Self::new(pi, q)
    }
}
