use nalgebra::DMatrix;

use super::StateDistribution;
use crate::error::{Error, Result};

/// `ν_ijk = Σ_l π_l U_li U_lj U_lk`, fully symmetric in its indices.
///
/// Indices are zero-based: `get(0, 0, 0)` is the all-ones column.
#[derive(Debug, Clone, PartialEq)]
pub struct NuTensor {
    kappa: usize,
    data: Vec<f64>,
}

impl NuTensor {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.kappa + j) * self.kappa + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Orthonormality slack accepted by [`nu_tensor`].
const ORTHO_TOL: f64 = 1e-8;

pub fn nu_tensor(pi: &StateDistribution, u: &DMatrix<f64>) -> Result<NuTensor> {
    let k = pi.kappa();
    if u.nrows() != k || u.ncols() != k {
        return Err(Error::validation("eigenvector matrix does not match pi"));
    }
    for a in 0..k {
        for b in a..k {
            let g: f64 = (0..k).map(|l| pi[l] * u[(l, a)] * u[(l, b)]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (g - want).abs() > ORTHO_TOL {
                return Err(Error::validation(format!("eigenvectors are not pi-orthonormal: <u{a}, u{b}> = {g}")));
            }
        }
    }
    let mut data = vec![0.0; k * k * k];
    for i in 0..k {
        for j in i..k {
            for m in j..k {
                let v: f64 = (0..k).map(|l| pi[l] * u[(l, i)] * u[(l, j)] * u[(l, m)]).sum();
                for (a, b, c) in permutations3(i, j, m) {
                    data[(a * k + b) * k + c] = v;
                }
            }
        }
    }
    Ok(NuTensor { kappa: k, data })
}

fn permutations3(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
}
