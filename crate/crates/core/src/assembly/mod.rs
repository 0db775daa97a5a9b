//! From an n-taxon joint distribution to a tree: recover every triple, read
//! pairwise path lengths off the triples, then rebuild the tree from the
//! resulting additive metric.

mod build;

pub use build::{build_tree, four_point_residual, same_topology, TreeFit, FOUR_POINT_TOL, MIN_INTERNAL_LENGTH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{marginalize, JointTensor};
use crate::identify::{recover_all_with, RecoverOptions, RecoveredModel};
use crate::model::{GtrRateMatrix, StateDistribution};

/// Relative disagreement between triples tolerated before the tensor is
/// declared inconsistent.
pub const TRIPLE_AGREEMENT_TOL: f64 = 1e-6;

/// Symmetric matrix of leaf-to-leaf path lengths with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, d: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if d.nrows() != n || d.ncols() != n {
            return Err(Error::validation(format!("distance matrix must be {n}x{n}")));
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::validation("distance matrix needs a zero diagonal"));
            }
            for j in 0..n {
                let x = d[(i, j)];
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::validation(format!("distance d[{i}][{j}] = {x} is not a nonnegative number")));
                }
                if (x - d[(j, i)]).abs() > 1e-12 * x.abs().max(1.0) {
                    return Err(Error::validation(format!("distance matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { labels, d })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }
}

/// Largest disagreement among the per-triple estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub triples: usize,
    /// `max |α_t − ᾱ| / ᾱ`.
    pub alpha_spread: f64,
    /// `max |Q_t − Q̄|` entrywise, relative to `max |Q̄|`.
    pub q_spread: f64,
    pub pi_spread: f64,
    /// Largest absolute spread of any pairwise distance across triples.
    pub distance_spread: f64,
    /// Worst reconstruction residual of a single triple.
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct AssembledDistances {
    pub distances: DistanceMatrix,
    pub alpha: f64,
    pub q: GtrRateMatrix,
    pub pi: StateDistribution,
    pub report: ConsistencyReport,
    pub triples: Vec<([usize; 3], RecoveredModel)>,
}

pub fn distances_from_joint(joint: &JointTensor) -> Result<AssembledDistances> {
    distances_from_joint_with(joint, &RecoverOptions::default())
}

/// Runs the three-taxon inversion on every triple, in lexicographic order,
/// and averages the results.
pub fn distances_from_joint_with(joint: &JointTensor, opts: &RecoverOptions) -> Result<AssembledDistances> {
    let n = joint.n_taxa();
    if n < 3 {
        return Err(Error::validation(format!("need at least 3 taxa, got {n}")));
    }
    let mut triples = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let m = marginalize(joint, &[i, j, k])?;
                let r = recover_all_with(&m, opts).map_err(|e| match e {
                    Error::RecoveryFailed(msg) => Error::InconsistentTensor(format!(
                        "triple ({}, {}, {}): {msg}",
                        joint.taxa()[i],
                        joint.taxa()[j],
                        joint.taxa()[k]
                    )),
                    other => other,
                })?;
                triples.push(([i, j, k], r));
            }
        }
    }
    let count = triples.len() as f64;
    let kappa = joint.kappa();

    let alpha = triples.iter().map(|(_, r)| r.alpha).sum::<f64>() / count;
    let q_mean = triples.iter().fold(DMatrix::zeros(kappa, kappa), |acc, (_, r)| acc + r.q.matrix()) / count;
    let pi_mean: Vec<f64> = (0..kappa).map(|s| triples.iter().map(|(_, r)| r.pi[s]).sum::<f64>() / count).collect();

    let mut sums = DMatrix::<f64>::zeros(n, n);
    let mut counts = DMatrix::<f64>::zeros(n, n);
    let mut samples: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, r) in &triples {
        let t = r.edge_lengths();
        for (x, y) in [(0, 1), (0, 2), (1, 2)] {
            let (a, b) = (idx[x], idx[y]);
            let d = t[x] + t[y];
            sums[(a, b)] += d;
            counts[(a, b)] += 1.0;
            samples.push((a, b, d));
        }
    }
    let mut d = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = sums[(a, b)] / counts[(a, b)];
            d[(a, b)] = v;
            d[(b, a)] = v;
        }
    }

    let q_scale = q_mean.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let report = ConsistencyReport {
        triples: triples.len(),
        alpha_spread: triples.iter().fold(0.0f64, |m, (_, r)| m.max((r.alpha - alpha).abs() / alpha)),
        q_spread: triples
            .iter()
            .fold(0.0f64, |m, (_, r)| m.max(crate::linalg::max_abs_diff(r.q.matrix(), &q_mean) / q_scale)),
        pi_spread: triples.iter().fold(0.0f64, |m, (_, r)| {
            m.max(r.pi.as_slice().iter().zip(&pi_mean).fold(0.0f64, |mm, (a, b)| mm.max((a - b).abs())))
        }),
        distance_spread: samples.iter().fold(0.0f64, |m, &(a, b, v)| m.max((v - d[(a, b)]).abs())),
        max_residual: triples.iter().fold(0.0f64, |m, (_, r)| m.max(r.residual)),
    };
    if report.alpha_spread > TRIPLE_AGREEMENT_TOL || report.q_spread > TRIPLE_AGREEMENT_TOL {
        return Err(Error::InconsistentTensor(format!(
            "triples disagree: alpha spread {:e}, Q spread {:e} (limit {TRIPLE_AGREEMENT_TOL:e})",
            report.alpha_spread, report.q_spread
        )));
    }
    let pi = StateDistribution::from_weights(&pi_mean)?;
    let (q, _) = GtrRateMatrix::normalized(q_mean, &pi)?;
    Ok(AssembledDistances { distances: DistanceMatrix::new(joint.taxa().to_vec(), d)?, alpha, q, pi, report, triples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{joint_n_spectral, LabeledTree};
    use crate::model::GammaRates;
    use crate::presets;

    #[test]
    fn balanced_quartet_distances() {
        let tree = LabeledTree::from_newick("((a:0.1,b:0.1):0.1,c:0.1,d:0.1);").unwrap();
        let model = presets::kimura3(2.0, 0.5, 1.0).unwrap();
        let p = joint_n_spectral(&tree, &model, &GammaRates::new(0.9).unwrap()).unwrap();
        let out = distances_from_joint(&p).unwrap();
        assert_eq!(out.report.triples, 4);
        assert!(out.report.alpha_spread < 1e-8);
        let d = out.distances.matrix();
        assert!((d[(0, 1)] - 0.2).abs() < 1e-9);
        assert!((d[(2, 3)] - 0.2).abs() < 1e-9);
        assert!((d[(0, 2)] - 0.3).abs() < 1e-9);
        assert!((d[(1, 3)] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn three_taxa_reduce_to_single_recovery() {
        let tree = LabeledTree::from_newick("(a:0.1,b:0.2,c:0.3);").unwrap();
        let p = joint_n_spectral(&tree, &presets::jukes_cantor(), &GammaRates::new(1.0).unwrap()).unwrap();
        let out = distances_from_joint(&p).unwrap();
        assert_eq!(out.report.triples, 1);
        assert!((out.alpha - 1.0).abs() < 1e-9);
        assert!((out.distances.get(1, 2) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn distance_matrix_validation() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(DistanceMatrix::new(labels.clone(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_ok());
        assert!(DistanceMatrix::new(labels.clone(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])).is_err());
        assert!(DistanceMatrix::new(labels, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])).is_err());
    }
}
