//! Small dense linear algebra used throughout the crate.
//!
//! The eigensolver is a cyclic Jacobi iteration; the matrices here are at most
//! a few dozen rows, where Jacobi is simple and unconditionally stable.

use nalgebra::DMatrix;

/// Sweep limit for [`jacobi_eigen`]; convergence is quadratic so this is never
/// reached for well-formed input.
const MAX_SWEEPS: usize = 100;

/// Off-diagonal magnitude at which a Jacobi sweep is considered converged,
/// relative to `max(1, ‖A‖_F)`.
pub const JACOBI_TOL: f64 = 1e-13;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues sorted in
/// descending order and eigenvectors stored as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Only the upper triangle is trusted; the input is symmetrized first.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> SymEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = JACOBI_TOL * m.norm().max(1.0);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymEigen { values, vectors }
}

// Applies the rotation G(p, q, θ) as m <- Gᵀ m G, v <- v G.
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Relative tolerance under which two eigenvalues are treated as equal.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

/// Assigns a group id to each entry of a descending-sorted spectrum so that
/// neighbours closer than `rel_tol · max|λ|` share an id.
pub fn eigen_groups(values: &[f64], rel_tol: f64) -> Vec<usize> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut groups = Vec::with_capacity(values.len());
    let mut id = 0;
    for (k, v) in values.iter().enumerate() {
        if k > 0 && (values[k - 1] - v).abs() >= rel_tol * scale {
            id += 1;
        }
        groups.push(id);
    }
    groups
}

/// Flips each column so that its largest-magnitude entry is positive,
/// taking the first index when several entries tie in magnitude.
pub fn canonicalize_column_signs(u: &mut DMatrix<f64>) -> Vec<f64> {
    let mut signs = Vec::with_capacity(u.ncols());
    for mut col in u.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = col.iter().copied().find(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0.0);
        let s = if lead < 0.0 { -1.0 } else { 1.0 };
        if s < 0.0 {
            col.neg_mut();
        }
        signs.push(s);
    }
    signs
}

/// π-weighted inner product `xᵀ diag(π) y`.
pub fn pi_dot(pi: &[f64], x: impl Iterator<Item = f64>, y: impl Iterator<Item = f64>) -> f64 {
    pi.iter().zip(x.zip(y)).map(|(p, (a, b))| p * a * b).sum()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_sorted() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = jacobi_eigen(&a);
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 + (i + j) as f64 * 0.1);
        let a = (&a + a.transpose()) * 0.5;
        let e = jacobi_eigen(&a);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let back = &e.vectors * d * e.vectors.transpose();
        assert!(max_abs_diff(&back, &a) < 1e-12);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!(max_abs_diff(&gram, &DMatrix::identity(n, n)) < 1e-13);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn groups_merge_close_values() {
        let g = eigen_groups(&[0.0, -1.0, -1.0 - 1e-12, -2.0], 1e-8);
        assert_eq!(g, vec![0, 1, 1, 2]);
    }

    #[test]
    fn sign_convention_prefers_first_on_ties() {
        let mut u = DMatrix::from_column_slice(4, 2, &[-1.0, 1.0, -1.0, 1.0, 0.1, -0.5, 0.2, 0.3]);
        canonicalize_column_signs(&mut u);
        assert_eq!(u[(0, 0)], 1.0);
        assert_eq!(u[(1, 1)], 0.5);
    }
}
