//! Generic versus exceptional eigenvector configurations.
//!
//! When `ν_ijj = 0` for every `1 ≤ i ≤ j` (zero-based, excluding the
//! constant column), a 4-state model must match one of two canonical
//! eigenvector patterns up to a relabelling of states and column signs:
//!
//! * Case A, uniform π: columns `(c,−c,−b,b)`, `(b,−b,c,−c)`, `(1,1,−1,−1)`
//!   with `b, c ≥ 0`, `b² + c² = 2` (A1 if `bc > 0`, A2 otherwise);
//! * Case B, π = (1/8, 1/8, 1/4, 1/2): columns `(2,−2,0,0)`,
//!   `(√2,√2,−√2,0)`, `(1,1,1,−1)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonicalize_column_signs, eigen_groups, jacobi_eigen, MULTIPLICITY_TOL};
use crate::model::spectral::projector;
use crate::model::{nu_tensor, GtrModel, NuTensor, StateDistribution};

/// Tolerance for matching π and eigenspaces against the canonical forms.
pub const MATCH_TOL: f64 = 1e-7;
/// `bc` at or below this counts as Case A2.
pub const BC_TOL: f64 = 1e-8;
/// A generic pair whose `|ν|` is within this factor of the threshold is
/// treated as ambiguous.
pub const AMBIGUITY_FACTOR: f64 = 1e3;

pub const CASE_B_PI: [f64; 4] = [0.125, 0.125, 0.25, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegimeKind {
    /// `ν_ijj ≠ 0` with `1 ≤ i ≤ j`, zero-based eigen-indices.
    Generic {
        i: usize,
        j: usize,
    },
    CaseA1 {
        b: f64,
        c: f64,
    },
    CaseA2 {
        b: f64,
        c: f64,
    },
    CaseB,
}

impl RegimeKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeKind::Generic { .. } => "generic",
            RegimeKind::CaseA1 { .. } => "case_a1",
            RegimeKind::CaseA2 { .. } => "case_a2",
            RegimeKind::CaseB => "case_b",
        }
    }

    pub fn is_exceptional(&self) -> bool {
        !matches!(self, RegimeKind::Generic { .. })
    }
}

/// Classification result. For the exceptional cases `permutation[s]` is the
/// canonical row matched by state `s`, and `column_signs` are the flips
/// applied to the canonical columns to reach the crate sign convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTag {
    #[serde(flatten)]
    pub kind: RegimeKind,
    pub permutation: Vec<usize>,
    pub column_signs: Vec<f64>,
}

/// A regime together with the eigenvector matrix it refers to. In the
/// exceptional cases degenerate eigenspaces are rotated onto the canonical
/// columns, so `u` may differ from the input basis.
#[derive(Debug, Clone)]
pub struct Classification {
    pub regime: RegimeTag,
    pub u: DMatrix<f64>,
    /// Set when the decision rested on a `ν` close to the zero threshold.
    pub ambiguous: bool,
}

/// Classifies a model using its own spectrum for the eigenspace grouping.
pub fn classify_model(model: &GtrModel) -> Result<Classification> {
    let groups = eigen_groups(&model.spectral.lambdas, MULTIPLICITY_TOL);
    let nu = nu_tensor(&model.pi, &model.spectral.u)?;
    classify_regime(&model.pi, &model.spectral.u, &groups, super::NU_REL_TOL * nu.max_abs())
}

/// Eigenvalue belonging to each column of `u` (any eigenbasis of the model,
/// e.g. the aligned one of a [`Classification`]): the Rayleigh quotient in
/// the `π`-weighted inner product.
pub fn eigenvalues_in_basis(model: &GtrModel, u: &DMatrix<f64>) -> Vec<f64> {
    let pi = model.pi.as_slice();
    let q = model.q.matrix();
    (0..u.ncols())
        .map(|m| {
            let col = u.column(m);
            let qc = q * col;
            let num: f64 = (0..pi.len()).map(|i| pi[i] * col[i] * qc[i]).sum();
            let den: f64 = (0..pi.len()).map(|i| pi[i] * col[i] * col[i]).sum();
            num / den
        })
        .collect()
}

/// Classifies `(π, U)`; `groups[k]` identifies the eigenspace of column `k`.
pub fn classify_regime(
    pi: &StateDistribution,
    u: &DMatrix<f64>,
    groups: &[usize],
    nu_tol: f64,
) -> Result<Classification> {
    candidates(pi, u, groups, nu_tol)?.into_iter().next().ok_or_else(|| unreachable_regime(pi.kappa()))
}

fn unreachable_regime(kappa: usize) -> Error {
    if kappa == 4 {
        Error::Internal("all nu_ijj vanish but neither exceptional form matches".into())
    } else {
        Error::UnsupportedRegime(format!("all nu_ijj vanish for kappa = {kappa}; only kappa = 4 is covered"))
    }
}

/// Every applicable classification, most preferred first.
pub(crate) fn candidates(
    pi: &StateDistribution,
    u: &DMatrix<f64>,
    groups: &[usize],
    nu_tol: f64,
) -> Result<Vec<Classification>> {
    let k = pi.kappa();
    if u.nrows() != k || u.ncols() != k || groups.len() != k {
        return Err(Error::validation("eigenvector matrix or grouping does not match pi"));
    }
    let nu = nu_tensor(pi, u)?;
    let generic = generic_pair(&nu, nu_tol).map(|(i, j, mag)| Classification {
        regime: RegimeTag {
            kind: RegimeKind::Generic { i, j },
            permutation: (0..k).collect(),
            column_signs: vec![1.0; k],
        },
        u: u.clone(),
        ambiguous: mag < AMBIGUITY_FACTOR * nu_tol,
    });
    let exceptional = if k == 4 { match_exceptional(pi, u, groups) } else { None };

    let degenerate = groups.windows(2).any(|w| w[0] == w[1]);
    let mut out = Vec::new();
    match (generic, exceptional) {
        (Some(g), Some(e)) => {
            // any basis of a repeated eigenspace is admissible; prefer the
            // canonical one when it exists
            if degenerate || g.ambiguous {
                out.push(e);
                out.push(g);
            } else {
                out.push(g);
                out.push(e);
            }
        }
        (Some(g), None) => out.push(g),
        (None, Some(e)) => out.push(e),
        (None, None) => {
            if k == 2 {
                return Err(Error::NonIdentifiableBinary("nu_222 = 0, so the shape and edge lengths trade off".into()));
            }
            return Err(unreachable_regime(k));
        }
    }
    Ok(out)
}

// Pair (i, j), 1 ≤ i ≤ j, maximizing |ν_ijj| above the threshold.
fn generic_pair(nu: &NuTensor, nu_tol: f64) -> Option<(usize, usize, f64)> {
    let k = nu.kappa();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 1..k {
        for j in i..k {
            let v = nu.get(i, j, j).abs();
            if v > nu_tol && best.is_none_or(|(_, _, m)| v > m) {
                best = Some((i, j, v));
            }
        }
    }
    best
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if (0..4).all(|x| p.contains(&x)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

// Residual of `x` outside the eigenspace of `group`.
fn off_space(u: &DMatrix<f64>, pi: &StateDistribution, groups: &[usize], group: usize, x: &[f64]) -> Vec<f64> {
    let cols: Vec<usize> = (0..groups.len()).filter(|&m| groups[m] == group).collect();
    let p = projector(u, pi, &cols);
    (0..x.len()).map(|i| x[i] - (0..x.len()).map(|j| p[(i, j)] * x[j]).sum::<f64>()).collect()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Canonical eigenvector matrix of an exceptional case, constant column
/// first.
pub fn canonical_u(kind: &RegimeKind) -> Option<DMatrix<f64>> {
    let r2 = std::f64::consts::SQRT_2;
    let rows: [f64; 16] = match *kind {
        RegimeKind::CaseA1 { b, c } | RegimeKind::CaseA2 { b, c } => [
            1.0, c, b, 1.0, //
            1.0, -c, -b, 1.0, //
            1.0, -b, c, -1.0, //
            1.0, b, -c, -1.0,
        ],
        RegimeKind::CaseB => [
            1.0, 2.0, r2, 1.0, //
            1.0, -2.0, r2, 1.0, //
            1.0, 0.0, -r2, 1.0, //
            1.0, 0.0, 0.0, -1.0,
        ],
        RegimeKind::Generic { .. } => return None,
    };
    Some(DMatrix::from_row_slice(4, 4, &rows))
}

fn match_exceptional(pi: &StateDistribution, u: &DMatrix<f64>, groups: &[usize]) -> Option<Classification> {
    let uniform = pi.as_slice().iter().all(|p| (p - 0.25).abs() <= MATCH_TOL);
    for perm in permutations4() {
        let kind = if uniform {
            match_case_a(pi, u, groups, &perm)
        } else if (0..4).all(|s| (pi[s] - CASE_B_PI[perm[s]]).abs() <= MATCH_TOL) {
            let canon = canonical_u(&RegimeKind::CaseB).unwrap();
            let fits = (1..4).all(|m| {
                let col: Vec<f64> = (0..4).map(|s| canon[(perm[s], m)]).collect();
                max_abs(&off_space(u, pi, groups, groups[m], &col)) <= MATCH_TOL
            });
            fits.then_some(RegimeKind::CaseB)
        } else {
            None
        };
        if let Some(kind) = kind {
            let canon = canonical_u(&kind).unwrap();
            let mut aligned = DMatrix::from_fn(4, 4, |s, m| canon[(perm[s], m)]);
            let column_signs = canonicalize_column_signs(&mut aligned);
            return Some(Classification {
                regime: RegimeTag { kind, permutation: perm.to_vec(), column_signs },
                u: aligned,
                ambiguous: false,
            });
        }
    }
    None
}

// Case A for one state relabelling: col₃ = (1,1,−1,−1) must sit in the third
// eigenspace, and (b, c) must put c·e₁₂ − b·e₃₄ and b·e₁₂ + c·e₃₄ in the
// first and second. Only b ≤ c is accepted; the swap is another relabelling.
fn match_case_a(pi: &StateDistribution, u: &DMatrix<f64>, groups: &[usize], perm: &[usize; 4]) -> Option<RegimeKind> {
    let lift = |canon: [f64; 4]| -> Vec<f64> { (0..4).map(|s| canon[perm[s]]).collect() };
    let col3 = lift([1.0, 1.0, -1.0, -1.0]);
    if max_abs(&off_space(u, pi, groups, groups[3], &col3)) > MATCH_TOL {
        return None;
    }
    let e12 = lift([1.0, -1.0, 0.0, 0.0]);
    let e34 = lift([0.0, 0.0, 1.0, -1.0]);
    let (b, c) = if groups[1] == groups[2] {
        let ok = [&e12, &e34].iter().all(|e| max_abs(&off_space(u, pi, groups, groups[1], e)) <= MATCH_TOL);
        if !ok {
            return None;
        }
        (1.0, 1.0)
    } else {
        let r1 = off_space(u, pi, groups, groups[1], &e12);
        let r2 = off_space(u, pi, groups, groups[1], &e34);
        let s1 = off_space(u, pi, groups, groups[2], &e12);
        let s2 = off_space(u, pi, groups, groups[2], &e34);
        // columns act on (b, c)
        let m = DMatrix::from_fn(8, 2, |r, col| match (r < 4, col) {
            (true, 0) => -r2[r],
            (true, _) => r1[r],
            (false, 0) => s1[r - 4],
            (false, _) => s2[r - 4],
        });
        let eig = jacobi_eigen(&(m.transpose() * &m));
        let mut x = [eig.vectors[(0, 1)], eig.vectors[(1, 1)]];
        if x[0] + x[1] < 0.0 {
            x = [-x[0], -x[1]];
        }
        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let (b, c) = (x[0] / norm * std::f64::consts::SQRT_2, x[1] / norm * std::f64::consts::SQRT_2);
        let resid = (&m * nalgebra::DVector::from_vec(vec![b, c])).amax();
        if resid > MATCH_TOL || b < -MATCH_TOL || c < -MATCH_TOL {
            return None;
        }
        (b.max(0.0), c.max(0.0))
    };
    if b > c + MATCH_TOL {
        return None;
    }
    Some(if b * c > BC_TOL {
        RegimeKind::CaseA1 { b, c }
    } else {
        RegimeKind::CaseA2 { b: 0.0, c: std::f64::consts::SQRT_2 }
    })
}

/// One named eigenvalue inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInequalityReport {
    pub checks: Vec<InequalityCheck>,
}

impl RateInequalityReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Eigenvalue inequalities that positivity of the off-diagonal rates forces
/// in the exceptional cases, plus that positivity itself for the canonical
/// `Ũ = U diag(λ) Uᵀ`. Generic regimes yield an empty report.
pub fn check_rate_inequalities(lambdas: &[f64], regime: &RegimeKind) -> RateInequalityReport {
    let mut checks = Vec::new();
    let Some(u) = canonical_u(regime) else {
        return RateInequalityReport { checks };
    };
    if lambdas.len() != 4 {
        checks.push(InequalityCheck { name: "kappa == 4".into(), holds: false });
        return RateInequalityReport { checks };
    }
    let l = lambdas;
    let mut push = |name: &str, holds: bool| checks.push(InequalityCheck { name: name.into(), holds });
    match regime {
        RegimeKind::CaseA1 { .. } => push("l4 > l2 + l3", l[3] > l[1] + l[2]),
        RegimeKind::CaseA2 { .. } => push("l4 > 2 l2", l[3] > 2.0 * l[1]),
        RegimeKind::CaseB => {
            push("l4 > 2 l3", l[3] > 2.0 * l[2]);
            push("l4 + 2 l3 > 4 l2", l[3] + 2.0 * l[2] > 4.0 * l[1]);
            push("l4 > 2 l2", l[3] > 2.0 * l[1]);
        }
        RegimeKind::Generic { .. } => unreachable!(),
    }
    let qt = DMatrix::from_fn(4, 4, |i, j| (1..4).map(|m| u[(i, m)] * l[m] * u[(j, m)]).sum::<f64>());
    let positive = (0..4).all(|i| (0..4).all(|j| i == j || qt[(i, j)] > 0.0));
    push("off-diagonal entries of U diag(l) U^T positive", positive);
    RateInequalityReport { checks }
}

/// First `(i, j, k)`, `1 ≤ i ≤ j ≤ k` zero-based, with `|ν_ijk| > nu_tol`.
pub fn nonzero_triple_search(pi: &StateDistribution, u: &DMatrix<f64>, nu_tol: f64) -> Result<(usize, usize, usize)> {
    let k = pi.kappa();
    if k < 3 {
        return Err(Error::validation(format!("a nonzero triple among nonconstant columns needs kappa >= 3, got {k}")));
    }
    let nu = nu_tensor(pi, u)?;
    for i in 1..k {
        for j in i..k {
            for l in j..k {
                if nu.get(i, j, l).abs() > nu_tol {
                    return Ok((i, j, l));
                }
            }
        }
    }
    Err(Error::Internal("every nu_ijk with i, j, k > 0 vanishes".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spectral_decompose;
    use crate::model::GtrRateMatrix;

    fn model_from(pi: &[f64], lambdas: &[f64], u: &DMatrix<f64>) -> GtrModel {
        let pi = StateDistribution::new(pi.to_vec()).unwrap();
        let (q, _) = GtrRateMatrix::from_spectrum(&pi, lambdas, u).unwrap();
        GtrModel::new(pi, q).unwrap()
    }

    #[test]
    fn jukes_cantor_is_case_a_with_equal_parameters() {
        let s = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let m = GtrModel::from_exchangeabilities(&s, StateDistribution::uniform(4)).unwrap();
        let c = classify_model(&m).unwrap();
        match c.regime.kind {
            RegimeKind::CaseA1 { b, c } => assert!((b - 1.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let t = nonzero_triple_search(&m.pi, &c.u, 1e-9).unwrap();
        assert_eq!(t, (1, 2, 3));
    }

    #[test]
    fn case_b_and_a2_are_recognized() {
        let u = canonical_u(&RegimeKind::CaseB).unwrap();
        let pi = CASE_B_PI.map(|x| x);
        let m = model_from(&pi, &[0.0, -0.66, -0.7, -1.2], &u);
        assert_eq!(classify_model(&m).unwrap().regime.kind, RegimeKind::CaseB);

        let r2 = std::f64::consts::SQRT_2;
        let u = canonical_u(&RegimeKind::CaseA2 { b: 0.0, c: r2 }).unwrap();
        let m = model_from(&[0.25; 4], &[0.0, -1.0, -1.2, -1.5], &u);
        assert!(matches!(classify_model(&m).unwrap().regime.kind, RegimeKind::CaseA2 { .. }));
    }

    #[test]
    fn aligned_eigenvalues_pass_the_inequalities() {
        let u = canonical_u(&RegimeKind::CaseB).unwrap();
        let m = model_from(&CASE_B_PI, &[0.0, -0.66, -0.7, -1.2], &u);
        let c = classify_model(&m).unwrap();
        let l = eigenvalues_in_basis(&m, &c.u);
        assert!(l[0].abs() < 1e-12);
        assert!(check_rate_inequalities(&l, &c.regime.kind).all_hold());
        let mut sorted = l.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in sorted.iter().zip(&m.spectral.lambdas) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relabelled_case_a1_with_unequal_parameters() {
        let (b, c) = (0.6, (2.0f64 - 0.36).sqrt());
        let u = canonical_u(&RegimeKind::CaseA1 { b, c }).unwrap();
        let base = model_from(&[0.25; 4], &[0.0, -0.8, -1.0, -1.5], &u);
        let m = base.permuted_states(&[2, 0, 3, 1]).unwrap();
        let cl = classify_model(&m).unwrap();
        match cl.regime.kind {
            RegimeKind::CaseA1 { b: rb, c: rc } => {
                assert!((rb - b).abs() < 1e-8 && (rc - c).abs() < 1e-8, "{rb} {rc}");
            }
            other => panic!("{other:?}"),
        }
        // the aligned basis still diagonalizes Q
        let qm = m.q.matrix();
        for k in 1..4 {
            let col = cl.u.column(k);
            let img = qm * col;
            let lam = m.spectral.lambdas[k];
            assert!((img - col * lam).amax() < 1e-9);
        }
    }

    #[test]
    fn random_like_model_is_generic() {
        let pi = StateDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 1.0, 2.0, 0.5, 1.0, 0.0, 0.3, 4.0, 2.0, 0.3, 0.0, 1.5, 0.5, 4.0, 1.5, 0.0],
        );
        let m = GtrModel::from_exchangeabilities(&s, pi).unwrap();
        let c = classify_model(&m).unwrap();
        assert!(matches!(c.regime.kind, RegimeKind::Generic { .. }));
        let nu = nu_tensor(&m.pi, &m.spectral.u).unwrap();
        assert!(nu.get(1, 2, 2).abs() > 1e-6 || nu.get(1, 1, 1).abs() > 1e-6);
        assert_eq!(nonzero_triple_search(&m.pi, &m.spectral.u, 1e-9).unwrap(), (1, 1, 1));
    }

    #[test]
    fn binary_symmetric_is_non_identifiable() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = GtrModel::from_exchangeabilities(&s, StateDistribution::uniform(2)).unwrap();
        assert!(matches!(classify_model(&m), Err(Error::NonIdentifiableBinary(_))));
        assert!(nonzero_triple_search(&m.pi, &m.spectral.u, 1e-9).is_err());
    }

    #[test]
    fn inequality_reports() {
        let r = check_rate_inequalities(&[0.0, -0.66, -0.7, -1.2], &RegimeKind::CaseB);
        assert!(r.all_hold(), "{r:?}");
        let jc = -4.0 / 3.0;
        let r = check_rate_inequalities(&[0.0, jc, jc, jc], &RegimeKind::CaseA1 { b: 1.0, c: 1.0 });
        assert!(r.all_hold());
        let r2 = std::f64::consts::SQRT_2;
        let r = check_rate_inequalities(&[0.0, -1.0, -1.5, -2.0], &RegimeKind::CaseA2 { b: 0.0, c: r2 });
        assert!(!r.checks[0].holds);
        assert!(check_rate_inequalities(&[0.0, -1.0], &RegimeKind::Generic { i: 1, j: 1 }).checks.is_empty());
    }

    #[test]
    fn spectral_decompose_of_case_b_model_is_consistent() {
        let u = canonical_u(&RegimeKind::CaseB).unwrap();
        let m = model_from(&CASE_B_PI, &[0.0, -0.66, -0.7, -1.2], &u);
        let sf = spectral_decompose(&m.q, &m.pi).unwrap();
        for k in 1..4 {
            let dot: f64 = (0..4).map(|s| m.pi[s] * sf.u[(s, k)] * u[(s, k)]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-10);
        }
    }
}
