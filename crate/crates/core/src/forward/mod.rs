//! Exact joint leaf-state distributions under GTR+Γ.

mod oracle;
mod spectral;
mod tree;

pub use oracle::{gauss_legendre, joint_quadrature_oracle};
pub use spectral::{joint3_exact, joint_n_spectral, MAX_SPECTRAL_TERMS, MAX_TAXA};
pub use tree::{Edge, LabeledTree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounding slack: entries down to `-NEG_TOL` are accepted as zero.
const NEG_TOL: f64 = 1e-13;
/// Normalization tolerance per entry; the total slack scales with size.
const SUM_TOL: f64 = 1e-12;

/// Probabilities of every leaf-state combination, flattened row-major with
/// the first taxon varying slowest: index `i₁·κ^{n−1} + … + i_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTensor {
    kappa: usize,
    taxa: Vec<String>,
    p: Vec<f64>,
}

impl JointTensor {
    pub fn new(kappa: usize, taxa: Vec<String>, p: Vec<f64>) -> Result<Self> {
        if kappa < 2 {
            return Err(Error::validation("kappa must be at least 2"));
        }
        if taxa.is_empty() {
            return Err(Error::validation("tensor needs at least one taxon"));
        }
        let expected = checked_len(kappa, taxa.len())?;
        if p.len() != expected {
            return Err(Error::validation(format!(
                "tensor has {} entries, expected {kappa}^{} = {expected}",
                p.len(),
                taxa.len()
            )));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= -NEG_TOL)) {
            return Err(Error::validation(format!("tensor entry {i} is {v}; probabilities must be nonnegative")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL.max(1e-15 * p.len() as f64) {
            return Err(Error::validation(format!("tensor entries sum to {sum}")));
        }
        Ok(Self { kappa, taxa, p })
    }

    pub(crate) fn from_parts(kappa: usize, taxa: Vec<String>, p: Vec<f64>) -> Self {
        Self { kappa, taxa, p }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, states: &[usize]) -> f64 {
        self.p[self.flat_index(states)]
    }

    pub fn flat_index(&self, states: &[usize]) -> usize {
        states.iter().fold(0, |acc, &s| acc * self.kappa + s)
    }

    /// Largest absolute entrywise difference; `None` if shapes differ.
    pub fn max_abs_diff(&self, other: &JointTensor) -> Option<f64> {
        if self.kappa != other.kappa || self.p.len() != other.p.len() {
            return None;
        }
        Some(self.p.iter().zip(&other.p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn with_taxa(mut self, taxa: Vec<String>) -> Result<Self> {
        if taxa.len() != self.taxa.len() {
            return Err(Error::validation("taxon count mismatch"));
        }
        self.taxa = taxa;
        Ok(self)
    }
}

fn checked_len(kappa: usize, n: usize) -> Result<usize> {
    u32::try_from(n)
        .ok()
        .and_then(|n| kappa.checked_pow(n))
        .ok_or_else(|| Error::DeskScaleExceeded(format!("{kappa}^{n} entries")))
}

/// Sums out every taxon not listed in `keep`. Output axes follow the order of
/// `keep`, so this doubles as an axis permutation.
pub fn marginalize(joint: &JointTensor, keep: &[usize]) -> Result<JointTensor> {
    let n = joint.n_taxa();
    let k = joint.kappa;
    if keep.is_empty() {
        return Err(Error::validation("marginalization needs at least one taxon to keep"));
    }
    let mut seen = vec![false; n];
    for &t in keep {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(Error::validation(format!("invalid or repeated taxon index {t} in {keep:?}")));
        }
    }
    let out_len = checked_len(k, keep.len())?;
    let mut out = vec![0.0; out_len];
    let mut states = vec![0usize; n];
    for &v in &joint.p {
        let idx = keep.iter().fold(0, |acc, &t| acc * k + states[t]);
        out[idx] += v;
        for s in states.iter_mut().rev() {
            *s += 1;
            if *s < k {
                break;
            }
            *s = 0;
        }
    }
    let taxa = keep.iter().map(|&t| joint.taxa[t].clone()).collect();
    Ok(JointTensor::from_parts(k, taxa, out))
}

/// Default labels: `a`, `b`, `c`, … then `t27`, `t28`, ….
pub fn default_taxa(n: usize) -> Vec<String> {
    (0..n).map(|i| if i < 26 { ((b'a' + i as u8) as char).to_string() } else { format!("t{}", i + 1) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> JointTensor {
        let p: Vec<f64> = (1..=8).map(|x| x as f64 / 36.0).collect();
        JointTensor::new(2, default_taxa(3), p).unwrap()
    }

    #[test]
    fn keep_all_is_identity() {
        let t = toy();
        assert_eq!(marginalize(&t, &[0, 1, 2]).unwrap(), t);
    }

    #[test]
    fn keep_one_and_reorder() {
        let t = toy();
        let m = marginalize(&t, &[2]).unwrap();
        // third taxon = 0 at entries 1,3,5,7 (values 1,3,5,7)/36
        assert!((m.probabilities()[0] - 16.0 / 36.0).abs() < 1e-15);
        let swapped = marginalize(&t, &[1, 0, 2]).unwrap();
        assert_eq!(swapped.get(&[1, 0, 1]), t.get(&[0, 1, 1]));
        assert_eq!(swapped.taxa(), &["b", "a", "c"]);
    }

    #[test]
    fn rejects_bad_keep_sets() {
        let t = toy();
        assert!(marginalize(&t, &[]).is_err());
        assert!(marginalize(&t, &[0, 0]).is_err());
        assert!(marginalize(&t, &[3]).is_err());
    }

    #[test]
    fn rejects_negative_and_unnormalized() {
        let mut p = vec![0.25; 4];
        p[0] = 0.5;
        p[1] = 0.0;
        assert!(JointTensor::new(2, default_taxa(2), p.clone()).is_ok());
        p[1] = -0.1;
        p[0] = 0.6;
        assert!(JointTensor::new(2, default_taxa(2), p).is_err());
        assert!(JointTensor::new(2, default_taxa(2), vec![0.3; 4]).is_err());
    }
}
