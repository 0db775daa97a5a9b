//! Closed-form spectral expansion of the mixture distribution.
//!
//! Writing each transition matrix as `U diag(e^{r t λ}) U⁻¹` and assigning
//! one eigen-index per edge, the rate `r` enters only through
//! `exp(r Σ_e t_e λ_{m_e})`, whose Γ expectation is a single MGF value. Every
//! internal vertex contributes `Σ_h π_h Π U(h, m_e)` over its incident
//! edges and each leaf contributes `π_i U(i, m_e)`, which makes the result
//! independent of any rooting.

use std::collections::HashMap;

use super::{default_taxa, JointTensor, LabeledTree};
use crate::error::{Error, Result};
use crate::model::{nu_tensor, GammaRates, GtrModel, TripleTree};

/// Largest tree handled by [`joint_n_spectral`].
pub const MAX_TAXA: usize = 10;
/// Cap on the number of eigen-index assignments (`κ^#edges`).
pub const MAX_SPECTRAL_TERMS: u64 = 1 << 26;

/// Joint distribution of the three-taxon star, taxa ordered `a, b, c`:
/// `P(i,j,k) = Σ ν_mnp V(m,i) V(n,j) V(p,k) L_α(t_a λ_m + t_b λ_n + t_c λ_p)`
/// with `V = Uᵀ diag(π)`.
pub fn joint3_exact(model: &GtrModel, rates: &GammaRates, tree: &TripleTree) -> Result<JointTensor> {
    let tree = TripleTree::new(tree.t_a, tree.t_b, tree.t_c)?;
    let k = model.kappa();
    let sf = &model.spectral;
    let nu = nu_tensor(&model.pi, &sf.u)?;
    let lam = &sf.lambdas;

    // one MGF evaluation per distinct exponent
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut w = vec![0.0; k * k * k];
    for m in 0..k {
        for n in 0..k {
            for p in 0..k {
                let x = tree.t_a * lam[m] + tree.t_b * lam[n] + tree.t_c * lam[p];
                let l = *cache.entry(x.to_bits()).or_insert_with(|| rates.mgf(x));
                w[(m * k + n) * k + p] = nu.get(m, n, p) * l;
            }
        }
    }
    let v = sf.u_inverse(&model.pi);
    let t = mode_product_all(&w, k, 3, |m, i| v[(m, i)]);
    Ok(JointTensor::from_parts(k, default_taxa(3), t))
}

/// Multiplies every mode of a `k^n` tensor by the `k×k` matrix `f(m, i)`:
/// `out(i₁..i_n) = Σ_m T(m₁..m_n) Π f(m_t, i_t)`.
fn mode_product_all(t: &[f64], k: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mat: Vec<f64> = (0..k * k).map(|x| f(x / k, x % k)).collect();
    let mut cur = t.to_vec();
    let mut next = vec![0.0; cur.len()];
    for mode in 0..n {
        let stride = k.pow((n - 1 - mode) as u32);
        let block = stride * k;
        next.iter_mut().for_each(|x| *x = 0.0);
        for base in (0..cur.len()).step_by(block) {
            for inner in 0..stride {
                for i in 0..k {
                    let mut acc = 0.0;
                    for m in 0..k {
                        acc += cur[base + m * stride + inner] * mat[m * k + i];
                    }
                    next[base + i * stride + inner] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Joint distribution of the leaves of an arbitrary tree, taxa in the
/// tree's label order.
pub fn joint_n_spectral(tree: &LabeledTree, model: &GtrModel, rates: &GammaRates) -> Result<JointTensor> {
    let k = model.kappa();
    let n = tree.n_leaves();
    if n > MAX_TAXA {
        return Err(Error::DeskScaleExceeded(format!("{n} taxa (limit {MAX_TAXA})")));
    }
    let n_edges = tree.edges().len();
    let terms = (k as u64).checked_pow(n_edges as u32).filter(|t| *t <= MAX_SPECTRAL_TERMS);
    let Some(terms) = terms else {
        return Err(Error::DeskScaleExceeded(format!(
            "{k}^{n_edges} eigen-index assignments (limit {MAX_SPECTRAL_TERMS})"
        )));
    };
    let pi = model.pi.as_slice();
    let u = &model.spectral.u;
    let lam = &model.spectral.lambdas;
    let adj = tree.adjacency();

    // edge carrying each leaf's index; for a two-leaf tree both leaves share it
    let leaf_edge: Vec<usize> = (0..n).map(|l| adj[l][0].1).collect();
    let internal: Vec<Vec<usize>> = (n..tree.n_vertices()).map(|v| adj[v].iter().map(|&(_, e)| e).collect()).collect();
    let lengths: Vec<f64> = tree.edges().iter().map(|e| e.length).collect();

    // G over the leaf eigen-indices, summing out the internal-edge indices
    let mut g = vec![0.0; k.pow(n as u32)];
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut assign = vec![0usize; n_edges];
    for _ in 0..terms {
        let mut weight = 1.0;
        for edges in &internal {
            let vertex: f64 = (0..k).map(|h| pi[h] * edges.iter().map(|&e| u[(h, assign[e])]).product::<f64>()).sum();
            weight *= vertex;
            if weight == 0.0 {
                break;
            }
        }
        if weight != 0.0 {
            let x: f64 = assign.iter().zip(&lengths).map(|(&m, t)| t * lam[m]).sum();
            let l = *cache.entry(x.to_bits()).or_insert_with(|| rates.mgf(x));
            let idx = leaf_edge.iter().fold(0, |acc, &e| acc * k + assign[e]);
            g[idx] += weight * l;
        }
        for a in assign.iter_mut().rev() {
            *a += 1;
            if *a < k {
                break;
            }
            *a = 0;
        }
    }

    let mut t = mode_product_all(&g, k, n, |m, i| u[(i, m)]);
    let mut states = vec![0usize; n];
    for x in t.iter_mut() {
        *x *= states.iter().map(|&s| pi[s]).product::<f64>();
        for s in states.iter_mut().rev() {
            *s += 1;
            if *s < k {
                break;
            }
            *s = 0;
        }
    }
    Ok(JointTensor::from_parts(k, tree.labels().to_vec(), t))
}
