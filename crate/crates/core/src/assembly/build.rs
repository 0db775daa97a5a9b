//! Neighbor joining for the topology, least squares for the lengths, and the
//! four-point condition as the certificate.

use nalgebra::DMatrix;

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::forward::{Edge, LabeledTree};

/// Four-point and fit residuals tolerated, relative to `max(1, max d)`.
pub const FOUR_POINT_TOL: f64 = 1e-8;
/// Internal edges shorter than this are rejected.
pub const MIN_INTERNAL_LENGTH: f64 = 1e-10;
/// Pendant lengths within this of zero are reported as zero.
const ZERO_PENDANT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TreeFit {
    pub tree: LabeledTree,
    /// Largest violation of the four-point condition over all quartets.
    pub four_point_residual: f64,
    /// Largest `|d_tree − d|` after the least-squares fit.
    pub fit_residual: f64,
}

/// For each quartet, the gap between the two largest of the three pair-sum
/// totals; zero for every quartet iff the metric is a tree metric.
pub fn four_point_residual(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in (k + 1)..n {
                    let mut s = [d[(i, j)] + d[(k, l)], d[(i, k)] + d[(j, l)], d[(i, l)] + d[(j, k)]];
                    s.sort_by(f64::total_cmp);
                    worst = worst.max(s[2] - s[1]);
                }
            }
        }
    }
    worst
}

/// Rebuilds the unique tree with positive internal edges realizing `d`.
pub fn build_tree(dist: &DistanceMatrix) -> Result<TreeFit> {
    let n = dist.len();
    if n < 3 {
        return Err(Error::validation(format!("tree building needs at least 3 taxa, got {n}")));
    }
    let d = dist.matrix();
    let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = FOUR_POINT_TOL * scale;
    let fp = four_point_residual(d);
    if fp > tol {
        return Err(Error::NotTreeMetric(format!("four-point condition violated by {fp:e}")));
    }

    let topology = neighbor_joining(d);
    let lengths = least_squares_lengths(d, n, &topology)?;
    let mut edges = Vec::with_capacity(topology.len());
    for (&(u, v), &len) in topology.iter().zip(&lengths) {
        let internal = u >= n && v >= n;
        let len = if internal {
            if len < MIN_INTERNAL_LENGTH {
                return Err(Error::NotTreeMetric(format!("implied internal edge length {len:e} is not positive")));
            }
            len
        } else if len < -ZERO_PENDANT_TOL {
            return Err(Error::NotTreeMetric(format!("implied pendant edge length {len:e} is negative")));
        } else {
            len.max(0.0)
        };
        edges.push(Edge { u, v, length: len });
    }
    let tree = LabeledTree::new(dist.labels().to_vec(), n - 2, edges)?;
    let fit_residual = crate::linalg::max_abs_diff(&tree.leaf_distances(), d);
    if fit_residual > tol {
        return Err(Error::NotTreeMetric(format!("fitted tree misses the distances by {fit_residual:e}")));
    }
    Ok(TreeFit { tree, four_point_residual: fp, fit_residual })
}

// Returns the edges of a binary tree: leaves 0..n, internal vertices n.. in
// creation order. Ties in the selection criterion go to the first pair.
fn neighbor_joining(d: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = d.nrows();
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d[(i, j)]).collect()).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut edges = Vec::new();
    let mut next = n;
    let grow = |dist: &mut Vec<Vec<f64>>| {
        for row in dist.iter_mut() {
            row.push(0.0);
        }
        let len = dist.len() + 1;
        dist.push(vec![0.0; len]);
    };
    while active.len() > 3 {
        let r = active.len() as f64;
        let total: Vec<f64> = active.iter().map(|&i| active.iter().map(|&j| dist[i][j]).sum()).collect();
        let mut best = (f64::INFINITY, 0, 1);
        for x in 0..active.len() {
            for y in (x + 1)..active.len() {
                let q = (r - 2.0) * dist[active[x]][active[y]] - total[x] - total[y];
                if q < best.0 - 1e-12 * q.abs().max(1.0) {
                    best = (q, x, y);
                }
            }
        }
        let (_, x, y) = best;
        let (f, g) = (active[x], active[y]);
        grow(&mut dist);
        let u = next;
        next += 1;
        for &k in &active {
            if k != f && k != g {
                let v = 0.5 * (dist[f][k] + dist[g][k] - dist[f][g]);
                dist[u][k] = v;
                dist[k][u] = v;
            }
        }
        edges.push((u, f));
        edges.push((u, g));
        active.retain(|&k| k != f && k != g);
        active.push(u);
    }
    let center = next;
    for &k in &active {
        edges.push((center, k));
    }
    edges
}

// Path-incidence least squares: minimize Σ_{i<j} (Σ_{e ∈ path(i,j)} ℓ_e − d_ij)².
fn least_squares_lengths(d: &DMatrix<f64>, n: usize, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n_vertices = edges.len() + 1;
    let mut adj = vec![Vec::new(); n_vertices];
    for (e, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, e));
        adj[v].push((u, e));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut a = DMatrix::<f64>::zeros(pairs.len(), edges.len());
    for (row, &(i, j)) in pairs.iter().enumerate() {
        // edge leading into each vertex on a search from i
        let mut via = vec![usize::MAX; n_vertices];
        let mut seen = vec![false; n_vertices];
        let mut stack = vec![i];
        seen[i] = true;
        while let Some(v) = stack.pop() {
            for &(w, e) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    via[w] = e;
                    stack.push(w);
                }
            }
        }
        let mut v = j;
        while v != i {
            let e = via[v];
            a[(row, e)] = 1.0;
            v = if edges[e].0 == v { edges[e].1 } else { edges[e].0 };
        }
    }
    let b = nalgebra::DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| d[(i, j)]));
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let chol = ata.cholesky().ok_or_else(|| Error::Internal("edge-length normal equations are singular".into()))?;
    Ok(chol.solve(&atb).iter().copied().collect())
}

/// True when both trees induce the same leaf bipartitions.
pub fn same_topology(a: &LabeledTree, b: &LabeledTree) -> bool {
    let (sa, sb) = (a.splits(), b.splits());
    sa.len() == sb.len() && sa.keys().zip(sb.keys()).all(|(x, y)| x == y)
}
