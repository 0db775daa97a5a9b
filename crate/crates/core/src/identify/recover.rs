//! The full inversion: tensor → (π, Q, α, edge lengths).

use serde::{Deserialize, Serialize};

use super::beta::{solve_beta, BetaSolution};
use super::extract::{extract_d_with, recover_pi, recover_u_and_pair_l, ExtractedData, NU_REL_TOL};
use super::regime::{candidates, check_rate_inequalities, Classification, RegimeKind, RegimeTag};
use crate::error::{Error, Result};
use crate::forward::{joint3_exact, marginalize, JointTensor};
use crate::model::{mgf_gamma_inverse, nu_tensor, GammaRates, GtrModel, GtrRateMatrix, StateDistribution, TripleTree};

/// Recovered lengths this close to zero are reported as exactly zero.
pub const ZERO_EDGE_TOL: f64 = 1e-10;
/// Default bound on `max |P(recovered) − P(input)|`.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverOptions {
    pub residual_tol: f64,
    /// `ν` entries below `nu_rel_tol · max|ν|` count as zero.
    pub nu_rel_tol: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self { residual_tol: RESIDUAL_TOL, nu_rel_tol: NU_REL_TOL }
    }
}

/// The five constants of the β equation as they appear in it, before
/// reordering for the uniqueness argument: `d₁, d₂` and the three
/// subtracted pair values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEquation {
    /// Labels in the one-based eigen-index notation, e.g. `"D342"`.
    pub labels: [String; 5],
    pub values: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct RecoveredModel {
    pub taxa: Vec<String>,
    pub pi: StateDistribution,
    pub q: GtrRateMatrix,
    pub alpha: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub regime: RegimeTag,
    /// Largest entrywise error of the input tensor regenerated from the
    /// recovered parameters.
    pub residual: f64,
    pub beta: BetaSolution,
    pub equation: BetaEquation,
    /// Taxon order used internally: `edge_order[p]` is the input taxon with
    /// the `p`-th shortest edge.
    pub edge_order: [usize; 3],
    pub lambdas: Vec<f64>,
}

impl RecoveredModel {
    pub fn edge_lengths(&self) -> [f64; 3] {
        [self.t_a, self.t_b, self.t_c]
    }

    pub fn model(&self) -> Result<GtrModel> {
        GtrModel::new(self.pi.clone(), self.q.clone())
    }
}

/// Orders taxa by edge length from the pair L-values: `t_x` grows with the
/// L-value of the pair not containing `x` (A for a, B for b, C for c). Ties
/// keep input order. Returns `order` with `order[p]` = input taxon of rank `p`.
pub fn rank_edges(a: &[f64], b: &[f64], c: &[f64]) -> [usize; 3] {
    let k = a.len();
    if k < 2 || b.len() != k || c.len() != k {
        return [0, 1, 2];
    }
    // the most negative eigenvalue separates the lengths most
    let m = k - 1;
    let key = [a[m], b[m], c[m]];
    let tie = 1e-12;
    let mut order = [0usize, 1, 2];
    for i in 1..3 {
        let mut j = i;
        while j > 0 && key[order[j - 1]] > key[order[j]] + tie {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    order
}

/// Inverts a three-taxon tensor with default tolerances.
pub fn recover_all(joint: &JointTensor) -> Result<RecoveredModel> {
    recover_all_with(joint, &RecoverOptions::default())
}

pub fn recover_all_with(joint: &JointTensor, opts: &RecoverOptions) -> Result<RecoveredModel> {
    if joint.n_taxa() != 3 {
        return Err(Error::validation(format!("recovery needs a 3-taxon tensor, got {} taxa", joint.n_taxa())));
    }
    let pi0 = recover_pi(joint)?;
    let first = recover_u_and_pair_l(joint, &pi0)?;
    let order = rank_edges(&first.a, &first.b, &first.c);
    let sorted = marginalize(joint, &order)?;

    let pi = recover_pi(&sorted)?;
    let pairs = recover_u_and_pair_l(&sorted, &pi)?;
    let groups = pairs.groups();
    let nu = nu_tensor(&pi, &pairs.u)?;
    let nu_tol = opts.nu_rel_tol * nu.max_abs();
    let options = candidates(&pi, &pairs.u, &groups, nu_tol)?;

    let mut last_err = None;
    for (attempt, cl) in options.iter().enumerate() {
        // a later candidate is only a fallback for a borderline first choice
        if attempt > 0 && !options[0].ambiguous && !cl.ambiguous {
            break;
        }
        match attempt_recovery(joint, &sorted, &pi, &pairs, cl, order, opts) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Internal("no regime candidate".into())))
}

fn attempt_recovery(
    input: &JointTensor,
    sorted: &JointTensor,
    pi: &StateDistribution,
    pairs: &super::extract::PairSpectrum,
    cl: &Classification,
    order: [usize; 3],
    opts: &RecoverOptions,
) -> Result<RecoveredModel> {
    let k = pi.kappa();
    let u = &cl.u;
    let nu = nu_tensor(pi, u)?;
    let d = extract_d_with(sorted, u, &nu, opts.nu_rel_tol * nu.max_abs())?;
    let data =
        ExtractedData { pi: pi.clone(), u: u.clone(), a: pairs.a.clone(), b: pairs.b.clone(), c: pairs.c.clone(), d };
    let (a, b, c) = (&data.a, &data.b, &data.c);

    // zero-based eigen-indices; labels use the one-based notation
    let (equation, args) = match cl.regime.kind {
        RegimeKind::Generic { i, j } => {
            let v = [data.d(i, j, j)?, data.d(j, i, j)?, a[j], b[j], c[i]];
            let labels = generic_labels(i, j);
            (BetaEquation { labels, values: v }, [v[0], v[1], v[2], v[3], v[4]])
        }
        RegimeKind::CaseA1 { .. } => {
            let v = [data.d(2, 3, 1)?, data.d(3, 1, 2)?, a[1], b[2], c[3]];
            let (d1, d2, a2, b3, c4) = (v[0], v[1], v[2], v[3], v[4]);
            let args = if c4 >= a2 && c4 >= b3 {
                [d1, d2, a2, b3, c4]
            } else if a2 >= c4 && a2 >= b3 {
                [d1, d2, c4, b3, a2]
            } else {
                [d1, d2, a2, c4, b3]
            };
            (BetaEquation { labels: labels(["D342", "D423", "A2", "B3", "C4"]), values: v }, args)
        }
        RegimeKind::CaseA2 { .. } | RegimeKind::CaseB => {
            let v = [data.d(3, 1, 1)?, data.d(1, 3, 1)?, c[3], a[1], b[1]];
            let (d1, d2, c4, a2, b2) = (v[0], v[1], v[2], v[3], v[4]);
            let args = if c4 >= b2 { [d1, d2, a2, b2, c4] } else { [d1, d2, a2, c4, b2] };
            (BetaEquation { labels: labels(["D422", "D242", "C4", "A2", "B2"]), values: v }, args)
        }
    };
    let beta = solve_beta(args[0], args[1], args[2], args[3], args[4])?;
    let alpha = 1.0 / beta.beta;

    // L⁻¹ of each pair value: λ_k times the pair's path length
    let inv = |v: f64| mgf_gamma_inverse(alpha, v.min(1.0));
    let mut s = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    for m in 1..k {
        s[0][m] = inv(c[m])?;
        s[1][m] = inv(b[m])?;
        s[2][m] = inv(a[m])?;
    }
    // trace(diag(π)Q) = Σ_m λ_m w_m = −1 fixes the scale
    let w: Vec<f64> = (0..k).map(|m| (0..k).map(|i| (pi[i] * u[(i, m)]).powi(2)).sum()).collect();
    let dist: Vec<f64> = s.iter().map(|sx| -(0..k).map(|m| w[m] * sx[m]).sum::<f64>()).collect();
    let total: f64 = dist.iter().sum();
    if total <= 0.0 || total.is_nan() {
        return Err(Error::RecoveryFailed(format!("total tree length {total} is not positive")));
    }
    let lambdas: Vec<f64> = (0..k).map(|m| (s[0][m] + s[1][m] + s[2][m]) / total).collect();
    let (q, _) = GtrRateMatrix::from_spectrum(pi, &lambdas, u)
        .map_err(|e| Error::RecoveryFailed(format!("recovered rate matrix is invalid: {e}")))?;

    if cl.regime.kind.is_exceptional() {
        let report = check_rate_inequalities(&lambdas, &cl.regime.kind);
        if !report.all_hold() {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
            return Err(Error::RecoveryFailed(format!("eigenvalue inequalities fail: {failed:?}")));
        }
    }

    // pairs (a,b), (a,c), (b,c) → pendant lengths
    let (dab, dac, dbc) = (dist[0], dist[1], dist[2]);
    let sorted_t = [0.5 * (dab + dac - dbc), 0.5 * (dab + dbc - dac), 0.5 * (dac + dbc - dab)];
    let mut t = [0.0; 3];
    for (p, &taxon) in order.iter().enumerate() {
        let x = sorted_t[p];
        if x < -ZERO_EDGE_TOL {
            return Err(Error::RecoveryFailed(format!("negative edge length {x:e}")));
        }
        t[taxon] = if x.abs() <= ZERO_EDGE_TOL { 0.0 } else { x };
    }

    let model = GtrModel::new(pi.clone(), q.clone())?;
    let rates = GammaRates::new(alpha)?;
    let tree = TripleTree::new(t[0], t[1], t[2]).map_err(|e| Error::RecoveryFailed(e.to_string()))?;
    let regenerated = joint3_exact(&model, &rates, &tree)?;
    let residual = regenerated.max_abs_diff(input).unwrap_or(f64::INFINITY);
    if residual > opts.residual_tol || residual.is_nan() {
        return Err(Error::RecoveryFailed(format!(
            "regenerated tensor differs from the input by {residual:e} (limit {:e}); regime {}, alpha {alpha}, t {t:?}",
            opts.residual_tol,
            cl.regime.kind.name()
        )));
    }
    Ok(RecoveredModel {
        taxa: input.taxa().to_vec(),
        pi: pi.clone(),
        q,
        alpha,
        t_a: t[0],
        t_b: t[1],
        t_c: t[2],
        regime: cl.regime.clone(),
        residual,
        beta,
        equation,
        edge_order: order,
        lambdas,
    })
}

fn labels(names: [&str; 5]) -> [String; 5] {
    names.map(str::to_string)
}

fn generic_labels(i: usize, j: usize) -> [String; 5] {
    let (i, j) = (i + 1, j + 1);
    [format!("D{i}{j}{j}"), format!("D{j}{i}{j}"), format!("A{j}"), format!("B{j}"), format!("C{i}")]
}
