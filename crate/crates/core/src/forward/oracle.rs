//! Independent numerical check of the spectral expansion.
//!
//! For each quadrature node the rate-`r` distribution is computed by
//! summing over internal states with matrix exponentials `exp(r t Q)`
//! (no eigen-decomposition), and the nodes are weighted by the Γ(α, 1/α)
//! density.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use super::{JointTensor, LabeledTree};
use crate::error::{Error, Result};
use crate::model::{GammaRates, GtrModel};

pub const MIN_NODES: usize = 16;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Rate nodes and probability weights approximating `E[g(r)]` for
/// `r ~ Γ(α, 1/α)`: composite Gauss–Legendre with `nodes` points per panel.
///
/// Panels are decades of the unit-scale variable `x = α r` below the upper
/// cutoff, so integrands like `e^{-c r}` with large `c` stay resolved; the
/// first panel is mapped by `x = b s^{1/α}` to absorb the `x^{α-1}`
/// singularity.
fn gamma_rule(alpha: f64, nodes: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(nodes);
    let sd = alpha.sqrt();
    let hi = alpha + 40.0 * sd + 40.0;
    let lo = (alpha - 40.0 * sd).max(0.0);
    let log_norm = ln_gamma(alpha);
    let log_density = |x: f64| log_gamma_density(alpha, x);
    let mut out = Vec::new();

    let mut panels = Vec::new();
    if lo > 0.0 {
        let m = 8;
        for i in 0..m {
            panels.push((lo + (hi - lo) * i as f64 / m as f64, lo + (hi - lo) * (i + 1) as f64 / m as f64));
        }
    } else {
        let first = hi * 1e-8;
        // ∫_0^b x^{α-1} e^{-x} g dx = (b^α/α) ∫_0^1 e^{-x(s)} g(x(s)) ds
        let scale = (alpha * first.ln() - alpha.ln() - log_norm).exp();
        for (s, w) in gx.iter().zip(&gw) {
            let s = 0.5 * (s + 1.0);
            let x = first * s.powf(1.0 / alpha);
            out.push((x / alpha, 0.5 * w * scale * (-x).exp()));
        }
        let mut a = first;
        while a * 10.0 < hi * 0.1 * (1.0 + 1e-12) {
            panels.push((a, a * 10.0));
            a *= 10.0;
        }
        let m = 4;
        for i in 0..m {
            panels.push((a + (hi - a) * i as f64 / m as f64, a + (hi - a) * (i + 1) as f64 / m as f64));
        }
    }
    for (a, b) in panels {
        let half = 0.5 * (b - a);
        for (s, w) in gx.iter().zip(&gw) {
            let x = a + half * (s + 1.0);
            out.push((x / alpha, w * half * log_density(x).exp()));
        }
    }
    out
}

/// `ln` of the Γ(α, 1) density at `x`. For large `α` the normalizing
/// constant is folded in analytically around the mode to avoid cancelling
/// terms of size `α ln α`.
fn log_gamma_density(alpha: f64, x: f64) -> f64 {
    if alpha < 10.0 {
        return (alpha - 1.0) * x.ln() - x - ln_gamma(alpha);
    }
    let y = x / alpha - 1.0;
    let a2 = alpha * alpha;
    // Stirling remainder of ln Γ(α)
    let corr = (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * a2)) / a2) / a2) / alpha;
    -0.5 * (2.0 * std::f64::consts::PI * alpha).ln() - corr + (alpha - 1.0) * y.ln_1p() - alpha * y
}

/// Quadrature approximation of the joint distribution, used to cross-check
/// [`super::joint_n_spectral`].
pub fn joint_quadrature_oracle(
    tree: &LabeledTree,
    model: &GtrModel,
    rates: &GammaRates,
    nodes: usize,
) -> Result<JointTensor> {
    if nodes < MIN_NODES {
        return Err(Error::validation(format!("quadrature needs at least {MIN_NODES} nodes")));
    }
    let n = tree.n_leaves();
    if n > super::MAX_TAXA {
        return Err(Error::DeskScaleExceeded(format!("{n} taxa")));
    }
    let k = model.kappa();
    let q = model.q.matrix();
    let mut acc = vec![0.0; k.pow(n as u32)];
    for (r, w) in gamma_rule(rates.alpha(), nodes) {
        if w == 0.0 {
            continue;
        }
        let transitions: Vec<DMatrix<f64>> = tree.edges().iter().map(|e| (q * (r * e.length)).exp()).collect();
        let p = fixed_rate_joint(tree, model.pi.as_slice(), &transitions, k);
        for (a, x) in acc.iter_mut().zip(p) {
            *a += w * x;
        }
    }
    Ok(JointTensor::from_parts(k, tree.labels().to_vec(), acc))
}

// Joint leaf distribution at one rate, by recursion over rooted subtrees:
// each vertex returns P(leaves below | own state) as a (state, leaves) table.
fn fixed_rate_joint(tree: &LabeledTree, pi: &[f64], m: &[DMatrix<f64>], k: usize) -> Vec<f64> {
    let adj = tree.adjacency();
    let n = tree.n_leaves();
    let root = if tree.n_vertices() > n { n } else { 0 };
    let (leaves, table) = subtree(tree, &adj, m, k, root, usize::MAX);
    let width = table.len() / k;
    let mut joint = vec![0.0; width];
    for h in 0..k {
        for (x, v) in joint.iter_mut().zip(&table[h * width..(h + 1) * width]) {
            *x += pi[h] * v;
        }
    }
    // reorder axes from traversal order to label order
    let mut out = vec![0.0; joint.len()];
    let mut pos = vec![0usize; n];
    for (axis, &leaf) in leaves.iter().enumerate() {
        pos[leaf] = axis;
    }
    let mut states = vec![0usize; n];
    for x in &joint {
        let idx = (0..n).fold(0, |acc, leaf| acc * k + states[pos[leaf]]);
        out[idx] = *x;
        for s in states.iter_mut().rev() {
            *s += 1;
            if *s < k {
                break;
            }
            *s = 0;
        }
    }
    out
}

fn subtree(
    tree: &LabeledTree,
    adj: &[Vec<(usize, usize)>],
    m: &[DMatrix<f64>],
    k: usize,
    v: usize,
    parent: usize,
) -> (Vec<usize>, Vec<f64>) {
    // start from the vertex itself: a leaf pins its own state
    let (mut leaves, mut table) = if tree.is_leaf(v) {
        let mut t = vec![0.0; k * k];
        for h in 0..k {
            t[h * k + h] = 1.0;
        }
        (vec![v], t)
    } else {
        (Vec::new(), vec![1.0; k])
    };
    for &(w, e) in &adj[v] {
        if w == parent {
            continue;
        }
        let (child_leaves, child) = subtree(tree, adj, m, k, w, v);
        let cw = child.len() / k;
        // propagate the child's table across the edge
        let mut moved = vec![0.0; k * cw];
        for h in 0..k {
            for g in 0..k {
                let p = m[e][(h, g)];
                for x in 0..cw {
                    moved[h * cw + x] += p * child[g * cw + x];
                }
            }
        }
        let width = table.len() / k;
        let mut next = vec![0.0; k * width * cw];
        for h in 0..k {
            for a in 0..width {
                let ta = table[h * width + a];
                for b in 0..cw {
                    next[(h * width + a) * cw + b] = ta * moved[h * cw + b];
                }
            }
        }
        table = next;
        leaves.extend(child_leaves);
    }
    (leaves, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_rule_reproduces_mgf() {
        for &alpha in &[0.5, 1.0, 3.0, 1e4] {
            let rule = gamma_rule(alpha, 64);
            let mass: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((mass - 1.0).abs() < 1e-12, "alpha {alpha}: mass {mass}");
            let mean: f64 = rule.iter().map(|(r, w)| r * w).sum();
            assert!((mean - 1.0).abs() < 1e-12);
            for &s in &[-0.5, -5.0, -30.0, -60.0] {
                let approx: f64 = rule.iter().map(|(r, w)| w * (r * s).exp()).sum();
                let exact = (1.0 - s / alpha).powf(-alpha);
                assert!((approx - exact).abs() < 1e-12, "alpha {alpha}, s {s}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn too_few_nodes() {
        let s = DMatrix::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 });
        let model = GtrModel::from_exchangeabilities(&s, crate::model::StateDistribution::uniform(2)).unwrap();
        let t = LabeledTree::from_newick("(a:1,b:1,c:1);").unwrap();
        assert!(joint_quadrature_oracle(&t, &model, &GammaRates::new(1.0).unwrap(), 8).is_err());
    }

    fn skewed() -> GtrModel {
        let pi = crate::model::StateDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 1.0, 2.0, 0.5, 1.0, 0.0, 0.3, 4.0, 2.0, 0.3, 0.0, 1.5, 0.5, 4.0, 1.5, 0.0],
        );
        GtrModel::from_exchangeabilities(&s, pi).unwrap()
    }

    #[test]
    fn agrees_with_spectral_expansion() {
        let model = skewed();
        let tree = LabeledTree::from_newick("((a:0.1,b:0.2):0.3,c:0.4,d:0.05);").unwrap();
        for &alpha in &[0.3, 1.0, 4.0] {
            let rates = GammaRates::new(alpha).unwrap();
            let exact = super::super::joint_n_spectral(&tree, &model, &rates).unwrap();
            let quad = joint_quadrature_oracle(&tree, &model, &rates, 32).unwrap();
            let err = exact.max_abs_diff(&quad).unwrap();
            assert!(err < 1e-10, "alpha {alpha}: {err}");
            assert!((quad.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_alpha_approaches_constant_rate() {
        let model = skewed();
        let tree = LabeledTree::from_newick("(a:0.1,b:0.2,c:0.3);").unwrap();
        let quad = joint_quadrature_oracle(&tree, &model, &GammaRates::new(1e4).unwrap(), 32).unwrap();
        let ms: Vec<_> = tree.edges().iter().map(|e| (model.q.matrix() * e.length).exp()).collect();
        let homogeneous = fixed_rate_joint(&tree, model.pi.as_slice(), &ms, 4);
        let err = quad.probabilities().iter().zip(&homogeneous).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-4, "{err}");
    }
}
