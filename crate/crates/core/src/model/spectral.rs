use nalgebra::DMatrix;

use super::{GtrRateMatrix, StateDistribution};
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_column_signs, jacobi_eigen};

/// Asymmetry of `diag(√π) Q diag(1/√π)` tolerated before the input is
/// rejected as non-reversible.
const SYMMETRY_TOL: f64 = 1e-10;

/// Right eigenvectors `u` (columns) and eigenvalues of a reversible rate
/// matrix with `uᵀ diag(π) u = I`, first column all ones and λ sorted
/// descending from an exact 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralForm {
    pub lambdas: Vec<f64>,
    pub u: DMatrix<f64>,
}

impl SpectralForm {
    pub fn kappa(&self) -> usize {
        self.lambdas.len()
    }

    /// `u⁻¹ = uᵀ diag(π)`.
    pub fn u_inverse(&self, pi: &StateDistribution) -> DMatrix<f64> {
        let k = self.kappa();
        DMatrix::from_fn(k, k, |m, i| self.u[(i, m)] * pi[i])
    }

    /// `u diag(λ) u⁻¹`.
    pub fn reconstruct(&self, pi: &StateDistribution) -> DMatrix<f64> {
        let k = self.kappa();
        DMatrix::from_fn(k, k, |i, j| {
            (0..k).map(|m| self.u[(i, m)] * self.lambdas[m] * self.u[(j, m)]).sum::<f64>() * pi[j]
        })
    }

    /// Orthogonal projector onto the span of the given columns, in the
    /// π-inner product: `x ↦ Σ_m u_m ⟨u_m, x⟩_π`.
    pub fn projector(&self, pi: &StateDistribution, columns: &[usize]) -> DMatrix<f64> {
        projector(&self.u, pi, columns)
    }
}

pub(crate) fn projector(u: &DMatrix<f64>, pi: &StateDistribution, columns: &[usize]) -> DMatrix<f64> {
    let k = u.nrows();
    DMatrix::from_fn(k, k, |i, j| columns.iter().map(|&m| u[(i, m)] * u[(j, m)]).sum::<f64>() * pi[j])
}

/// Diagonalizes `Q` through the symmetric similarity `diag(√π) Q diag(1/√π)`.
pub fn spectral_decompose(q: &GtrRateMatrix, pi: &StateDistribution) -> Result<SpectralForm> {
    let k = pi.kappa();
    let qm = q.matrix();
    if qm.nrows() != k {
        return Err(Error::validation("rate matrix and pi differ in size"));
    }
    let sqrt_pi: Vec<f64> = pi.as_slice().iter().map(|p| p.sqrt()).collect();
    let sym = DMatrix::from_fn(k, k, |i, j| sqrt_pi[i] * qm[(i, j)] / sqrt_pi[j]);
    let scale = sym.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let asym = crate::linalg::max_abs_diff(&sym, &sym.transpose());
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::validation(format!(
            "symmetrized rate matrix is asymmetric by {asym:e}; not a reversible GTR matrix"
        )));
    }
    let eig = jacobi_eigen(&sym);
    let mut lambdas = eig.values;
    let mut u = DMatrix::from_fn(k, k, |i, m| eig.vectors[(i, m)] / sqrt_pi[i]);

    lambdas[0] = 0.0;
    u.column_mut(0).fill(1.0);
    if lambdas[1] >= 0.0 {
        return Err(Error::validation("rate matrix has a repeated zero eigenvalue"));
    }
    canonicalize_column_signs(&mut u);
    Ok(SpectralForm { lambdas, u })
}
