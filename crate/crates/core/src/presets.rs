//! Named models and the random parameter sampler used by round-trip checks.
//!
//! Nucleotide presets use the state order A, C, G, T.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::forward::{default_taxa, Edge, LabeledTree};
use crate::identify::{canonical_u, RegimeKind, CASE_B_PI};
use crate::model::{GammaRates, GtrModel, GtrRateMatrix, StateDistribution, TripleTree};

pub fn jukes_cantor() -> GtrModel {
    let s = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
    GtrModel::from_exchangeabilities(&s, StateDistribution::uniform(4)).expect("JC is a valid model")
}

/// Kimura two-parameter model with transition/transversion rate ratio `ts`.
pub fn kimura2(ts: f64) -> Result<GtrModel> {
    kimura3(ts, 1.0, 1.0)
}

/// Kimura three-parameter model: `ts` for A↔G and C↔T, `tv1` for A↔C and
/// G↔T, `tv2` for A↔T and C↔G.
pub fn kimura3(ts: f64, tv1: f64, tv2: f64) -> Result<GtrModel> {
    let mut s = DMatrix::zeros(4, 4);
    for (i, j, x) in [(0, 2, ts), (1, 3, ts), (0, 1, tv1), (2, 3, tv1), (0, 3, tv2), (1, 2, tv2)] {
        s[(i, j)] = x;
        s[(j, i)] = x;
    }
    GtrModel::from_exchangeabilities(&s, StateDistribution::uniform(4))
}

fn from_canonical(kind: RegimeKind, pi: &[f64], nonzero: [f64; 3]) -> Result<GtrModel> {
    let u = canonical_u(&kind).ok_or_else(|| Error::validation("generic regime has no canonical form"))?;
    let pi = StateDistribution::new(pi.to_vec())?;
    let lambdas = [0.0, nonzero[0], nonzero[1], nonzero[2]];
    let (q, _) = GtrRateMatrix::from_spectrum(&pi, &lambdas, &u)?;
    GtrModel::new(pi, q)
}

/// Uniform-π model with canonical Case A eigenvectors for `(b, c)` and the
/// given nonzero eigenvalues (any scale; the result is normalized).
pub fn case_a(b: f64, c: f64, lambdas: [f64; 3]) -> Result<GtrModel> {
    if (b * b + c * c - 2.0).abs() > 1e-12 || b < 0.0 || c < 0.0 {
        return Err(Error::validation("case A needs b, c >= 0 with b^2 + c^2 = 2"));
    }
    let kind = if b * c > 0.0 { RegimeKind::CaseA1 { b, c } } else { RegimeKind::CaseA2 { b, c } };
    from_canonical(kind, &[0.25; 4], lambdas)
}

/// Case A with `(b, c) = (0, √2)` and eigenvalues ∝ (−1, −1.2, −1.5).
pub fn case_a2() -> GtrModel {
    case_a(0.0, std::f64::consts::SQRT_2, [-1.0, -1.2, -1.5]).expect("valid case A2 preset")
}

/// π = (1/8, 1/8, 1/4, 1/2) with canonical Case B eigenvectors.
pub fn case_b(lambdas: [f64; 3]) -> Result<GtrModel> {
    from_canonical(RegimeKind::CaseB, &CASE_B_PI, lambdas)
}

/// Case B with eigenvalues ∝ (−0.66, −0.7, −1.2).
pub fn case_b_default() -> GtrModel {
    case_b([-0.66, -0.7, -1.2]).expect("valid case B preset")
}

/// Random parameters for round trips: π flat Dirichlet, exchangeabilities
/// log-uniform on [0.1, 10], α log-uniform on [0.2, 5], pendant lengths
/// uniform on [0.02, 2].
#[derive(Debug, Clone, Copy)]
pub struct ParameterSampler {
    pub exchangeability: (f64, f64),
    pub alpha: (f64, f64),
    pub edge: (f64, f64),
}

impl Default for ParameterSampler {
    fn default() -> Self {
        Self { exchangeability: (0.1, 10.0), alpha: (0.2, 5.0), edge: (0.02, 2.0) }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

impl ParameterSampler {
    pub fn pi<R: Rng + ?Sized>(&self, rng: &mut R, kappa: usize) -> StateDistribution {
        let w: Vec<f64> = (0..kappa).map(|_| Exp1.sample(rng)).collect();
        StateDistribution::from_weights(&w).expect("exponential weights are positive")
    }

    pub fn model<R: Rng + ?Sized>(&self, rng: &mut R, kappa: usize) -> Result<GtrModel> {
        let pi = self.pi(rng, kappa);
        let mut s = DMatrix::zeros(kappa, kappa);
        for i in 0..kappa {
            for j in (i + 1)..kappa {
                let x = log_uniform(rng, self.exchangeability);
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        GtrModel::from_exchangeabilities(&s, pi)
    }

    pub fn rates<R: Rng + ?Sized>(&self, rng: &mut R) -> GammaRates {
        GammaRates::new(log_uniform(rng, self.alpha)).expect("positive shape")
    }

    pub fn triple<R: Rng + ?Sized>(&self, rng: &mut R) -> TripleTree {
        let mut t = || rng.random_range(self.edge.0..self.edge.1);
        TripleTree::new(t(), t(), t()).expect("positive lengths")
    }
}

/// Random unrooted binary tree on `n ≥ 3` leaves labelled `a, b, …`, built by
/// attaching leaves to uniformly chosen edges. Pendant lengths are uniform on
/// `pendant`, internal lengths on `internal`.
pub fn random_binary_tree<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    pendant: (f64, f64),
    internal: (f64, f64),
) -> Result<LabeledTree> {
    if n < 3 {
        return Err(Error::validation("a binary tree here needs at least 3 leaves"));
    }
    // vertices: leaves 0..n, internal n..2n-2
    let mut edges: Vec<(usize, usize)> = vec![(n, 0), (n, 1), (n, 2)];
    for (mid, leaf) in (n + 1..).zip(3..n) {
        let e = rng.random_range(0..edges.len());
        let (u, v) = edges[e];
        edges[e] = (u, mid);
        edges.push((mid, v));
        edges.push((mid, leaf));
    }
    let edges = edges
        .into_iter()
        .map(|(u, v)| {
            let range = if u >= n && v >= n { internal } else { pendant };
            Edge { u, v, length: rng.random_range(range.0..range.1) }
        })
        .collect();
    LabeledTree::new(default_taxa(n), n - 2, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::classify_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_classify_as_expected() {
        let name = |m: &GtrModel| classify_model(m).unwrap().regime.kind.name();
        assert_eq!(name(&jukes_cantor()), "case_a1");
        assert_eq!(name(&kimura2(3.0).unwrap()), "case_a1");
        assert_eq!(name(&kimura2(0.4).unwrap()), "case_a1");
        assert_eq!(name(&kimura3(3.0, 0.5, 1.4).unwrap()), "case_a1");
        assert_eq!(name(&case_a2()), "case_a2");
        assert_eq!(name(&case_b_default()), "case_b");
    }

    #[test]
    fn sampler_is_reproducible_and_in_range() {
        let s = ParameterSampler::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let m1 = s.model(&mut r1, 4).unwrap();
        let m2 = s.model(&mut r2, 4).unwrap();
        assert_eq!(m1.q.matrix(), m2.q.matrix());
        for _ in 0..100 {
            let a = s.rates(&mut r1).alpha();
            assert!((0.2..5.0).contains(&a));
            assert!(s.triple(&mut r1).lengths().iter().all(|t| (0.02..2.0).contains(t)));
        }
    }

    #[test]
    fn random_trees_are_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 3..8 {
            let t = random_binary_tree(&mut rng, n, (0.02, 1.0), (0.05, 0.5)).unwrap();
            assert_eq!(t.n_leaves(), n);
            assert_eq!(t.edges().len(), 2 * n - 3);
            assert_eq!(t.splits().len(), 2 * n - 3);
        }
    }
}
