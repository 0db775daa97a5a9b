//! Reading π, the eigenvectors, and the L-values off a three-taxon joint
//! distribution.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::{marginalize, JointTensor};
use crate::linalg::{canonicalize_column_signs, eigen_groups, jacobi_eigen, MULTIPLICITY_TOL};
use crate::model::StateDistribution;

/// Agreement required between the three one-taxon marginals.
pub const STATIONARITY_TOL: f64 = 1e-10;
/// Largest off-diagonal entry tolerated after simultaneous diagonalization.
pub const DIAGONALIZATION_TOL: f64 = 1e-9;
/// Slack above 1 accepted for an extracted L-value.
pub const L_VALUE_SLACK: f64 = 1e-9;

fn require_three(joint: &JointTensor) -> Result<()> {
    if joint.n_taxa() != 3 {
        return Err(Error::validation(format!("expected a 3-taxon tensor, got {} taxa", joint.n_taxa())));
    }
    Ok(())
}

/// The common one-taxon marginal.
pub fn recover_pi(joint: &JointTensor) -> Result<StateDistribution> {
    require_three(joint)?;
    let margins: Vec<JointTensor> = (0..3).map(|t| marginalize(joint, &[t])).collect::<Result<_>>()?;
    for (t, m) in margins.iter().enumerate().skip(1) {
        let diff = m.max_abs_diff(&margins[0]).unwrap_or(f64::INFINITY);
        if diff > STATIONARITY_TOL {
            return Err(Error::NotStationary(format!(
                "marginal of taxon {} differs from taxon {} by {diff:e}",
                joint.taxa()[t],
                joint.taxa()[0]
            )));
        }
    }
    let k = joint.kappa();
    let avg: Vec<f64> = (0..k).map(|i| margins.iter().map(|m| m.probabilities()[i]).sum::<f64>() / 3.0).collect();
    if let Some(p) = avg.iter().find(|p| **p <= 0.0) {
        return Err(Error::NotStationary(format!("state frequency {p} is not positive")));
    }
    StateDistribution::from_weights(&avg)
}

/// Eigenvectors shared by the three pair matrices `diag(π)⁻¹ P_xy`, with
/// their eigenvalues: `c[k]` for pair (a,b), `b[k]` for (a,c), `a[k]` for
/// (b,c).
#[derive(Debug, Clone)]
pub struct PairSpectrum {
    pub u: DMatrix<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl PairSpectrum {
    /// Indices sharing an L-value in all three pairs, i.e. a common
    /// eigenvalue of Q.
    pub fn groups(&self) -> Vec<usize> {
        let k = self.c.len();
        let mut groups = vec![0usize; k];
        let same = |x: &[f64], i: usize, j: usize| (x[i] - x[j]).abs() < MULTIPLICITY_TOL;
        for m in 1..k {
            let tied = same(&self.c, m - 1, m) && same(&self.b, m - 1, m) && same(&self.a, m - 1, m);
            groups[m] = if tied { groups[m - 1] } else { groups[m - 1] + 1 };
        }
        groups
    }
}

fn pair_matrix(joint: &JointTensor, x: usize, y: usize) -> Result<DMatrix<f64>> {
    let k = joint.kappa();
    let m = marginalize(joint, &[x, y])?;
    Ok(DMatrix::from_row_slice(k, k, m.probabilities()))
}

/// Simultaneously diagonalizes the three pair matrices. Columns are sorted
/// by decreasing L-value, the first is all ones, and signs follow the crate
/// convention.
pub fn recover_u_and_pair_l(joint: &JointTensor, pi: &StateDistribution) -> Result<PairSpectrum> {
    require_three(joint)?;
    let k = joint.kappa();
    if pi.kappa() != k {
        return Err(Error::validation("pi does not match the tensor"));
    }
    let isq: Vec<f64> = pi.as_slice().iter().map(|p| 1.0 / p.sqrt()).collect();
    // diag(π)^{-1/2} P diag(π)^{-1/2}: symmetric, similar to diag(π)⁻¹P
    let mut sym = Vec::with_capacity(3);
    for (x, y) in [(0, 1), (0, 2), (1, 2)] {
        let p = pair_matrix(joint, x, y)?;
        let asym = crate::linalg::max_abs_diff(&p, &p.transpose());
        if asym > STATIONARITY_TOL {
            return Err(Error::NotSimultaneouslyDiagonalizable(format!(
                "pair ({x},{y}) joint matrix is asymmetric by {asym:e}"
            )));
        }
        sym.push(DMatrix::from_fn(k, k, |i, j| isq[i] * p[(i, j)] * isq[j]));
    }

    let first = jacobi_eigen(&sym[0]);
    let mut v = first.vectors;
    let mut groups = eigen_groups(&first.values, MULTIPLICITY_TOL);
    for m in &sym[1..] {
        groups = refine(&mut v, m, &groups);
    }

    let diag: Vec<Vec<f64>> = sym
        .iter()
        .map(|m| {
            let d = v.transpose() * m * &v;
            let off = (0..k)
                .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
                .fold(0.0f64, |acc, (i, j)| acc.max(d[(i, j)].abs()));
            (off, (0..k).map(|i| d[(i, i)]).collect::<Vec<f64>>())
        })
        .map(|(off, vals)| {
            if off > DIAGONALIZATION_TOL {
                Err(Error::NotSimultaneouslyDiagonalizable(format!(
                    "pair matrices share no eigenbasis (residual off-diagonal {off:e})"
                )))
            } else {
                Ok(vals)
            }
        })
        .collect::<Result<_>>()?;

    // decreasing L-value: pair (a,b) first, ties broken by the other pairs
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        diag[0][j]
            .total_cmp(&diag[0][i])
            .then(diag[1][j].total_cmp(&diag[1][i]))
            .then(diag[2][j].total_cmp(&diag[2][i]))
    });
    let mut u = DMatrix::from_fn(k, k, |s, c| v[(s, order[c])] * isq[s]);
    let pick = |d: &Vec<f64>| order.iter().map(|&i| d[i]).collect::<Vec<f64>>();
    let (mut c, mut b, mut a) = (pick(&diag[0]), pick(&diag[1]), pick(&diag[2]));

    for (name, vals) in [("C", &c), ("B", &b), ("A", &a)] {
        if (vals[0] - 1.0).abs() > L_VALUE_SLACK {
            return Err(Error::NotSimultaneouslyDiagonalizable(format!(
                "leading {name} value is {}, expected 1",
                vals[0]
            )));
        }
        if let Some(x) = vals[1..].iter().find(|x| !(**x > 0.0 && **x < 1.0 + L_VALUE_SLACK)) {
            return Err(Error::NotSimultaneouslyDiagonalizable(format!("{name} value {x} outside (0, 1]")));
        }
    }
    // the stationary column: √π before scaling, exactly ones after
    let lead = u.column(0).iter().sum::<f64>().signum();
    if u.column(0).iter().any(|x| (x * lead - 1.0).abs() > 1e-6) {
        return Err(Error::NotSimultaneouslyDiagonalizable("leading eigenvector is not constant".into()));
    }
    u.column_mut(0).fill(1.0);
    c[0] = 1.0;
    b[0] = 1.0;
    a[0] = 1.0;
    canonicalize_column_signs(&mut u);
    Ok(PairSpectrum { u, a, b, c })
}

// Rotates `v` within each group so that `m` restricted to the group becomes
// diagonal; returns the finer grouping by (old group, new eigenvalue).
fn refine(v: &mut DMatrix<f64>, m: &DMatrix<f64>, groups: &[usize]) -> Vec<usize> {
    let k = groups.len();
    let mut refined = vec![0usize; k];
    let mut next_id = 0;
    let mut start = 0;
    while start < k {
        let end = (start..k).find(|&i| groups[i] != groups[start]).unwrap_or(k);
        let cols: Vec<usize> = (start..end).collect();
        let basis = v.select_columns(&cols);
        let restricted = basis.transpose() * m * &basis;
        let eig = jacobi_eigen(&restricted);
        let rotated = &basis * &eig.vectors;
        for (off, &c) in cols.iter().enumerate() {
            v.set_column(c, &rotated.column(off));
        }
        let sub = eigen_groups(&eig.values, MULTIPLICITY_TOL);
        for (off, g) in sub.iter().enumerate() {
            refined[start + off] = next_id + g;
        }
        next_id += sub.last().map_or(0, |g| g + 1);
        start = end;
    }
    refined
}

/// Three-way values `D[i,j,k] = L_α(λ_i t_a + λ_j t_b + λ_k t_c)`, defined
/// where `ν_ijk` is clearly nonzero. Indices are zero-based.
#[derive(Debug, Clone)]
pub struct DValues {
    kappa: usize,
    values: Vec<Option<f64>>,
}

impl DValues {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        self.values[(i * self.kappa + j) * self.kappa + k]
    }

    fn require(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.get(i, j, k)
            .ok_or_else(|| Error::Internal(format!("D value ({i},{j},{k}) is undefined because nu vanishes")))
    }
}

/// Default relative threshold below which `ν` counts as zero.
pub const NU_REL_TOL: f64 = 1e-9;

/// Undoes the three `V = U⁻¹` mode products of the forward formula,
/// `P ×₁ Uᵀ ×₂ Uᵀ ×₃ Uᵀ = ν ∘ L`, and divides by `ν` where it is nonzero.
pub fn extract_d(joint: &JointTensor, pi: &StateDistribution, u: &DMatrix<f64>) -> Result<DValues> {
    let nu = crate::model::nu_tensor(pi, u)?;
    extract_d_with(joint, u, &nu, NU_REL_TOL * nu.max_abs())
}

pub(crate) fn extract_d_with(
    joint: &JointTensor,
    u: &DMatrix<f64>,
    nu: &crate::model::NuTensor,
    nu_tol: f64,
) -> Result<DValues> {
    require_three(joint)?;
    let k = joint.kappa();
    let mut t = joint.probabilities().to_vec();
    let mut next = vec![0.0; t.len()];
    for mode in 0..3 {
        let stride = k.pow(2 - mode as u32);
        for base in (0..t.len()).step_by(stride * k) {
            for inner in 0..stride {
                for m in 0..k {
                    next[base + m * stride + inner] = (0..k).map(|i| t[base + i * stride + inner] * u[(i, m)]).sum();
                }
            }
        }
        std::mem::swap(&mut t, &mut next);
    }
    let mut values = vec![None; t.len()];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let n = nu.get(i, j, l);
                if n.abs() <= nu_tol {
                    continue;
                }
                let d = t[(i * k + j) * k + l] / n;
                if !(d > 0.0 && d <= 1.0 + L_VALUE_SLACK) {
                    return Err(Error::InconsistentD(format!("D({i},{j},{l}) = {d} lies outside (0, 1]")));
                }
                values[(i * k + j) * k + l] = Some(d.min(1.0));
            }
        }
    }
    Ok(DValues { kappa: k, values })
}

/// Everything the inversion reads off a three-taxon tensor.
#[derive(Debug, Clone)]
pub struct ExtractedData {
    pub pi: StateDistribution,
    pub u: DMatrix<f64>,
    /// Pair (b,c) L-values.
    pub a: Vec<f64>,
    /// Pair (a,c) L-values.
    pub b: Vec<f64>,
    /// Pair (a,b) L-values.
    pub c: Vec<f64>,
    pub d: DValues,
}

impl ExtractedData {
    pub(crate) fn d(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.d.require(i, j, k)
    }
}
