//! File formats: model and tensor JSON, the compact binary tensor, and the
//! recovered-model report.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledDistances, ConsistencyReport, TreeFit};
use crate::error::{Error, Result};
use crate::forward::{default_taxa, JointTensor, LabeledTree};
use crate::identify::{RecoveredModel, RegimeKind};
use crate::model::{GammaRates, GtrModel, GtrRateMatrix, StateDistribution, TripleTree};

/// Magic bytes opening a binary tensor file.
pub const TENSOR_MAGIC: &[u8; 4] = b"GTRJ";
/// Magic, κ, n and four reserved zero bytes.
pub const TENSOR_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLengths {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl From<[f64; 3]> for EdgeLengths {
    fn from([a, b, c]: [f64; 3]) -> Self {
        Self { a, b, c }
    }
}

/// On-disk model description. Exactly one of `exchangeabilities` and `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kappa: usize,
    pub pi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchangeabilities: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_lengths: Option<EdgeLengths>,
    /// Newick tree for more than three taxa; alternative to `edge_lengths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: GtrModel,
    pub rates: GammaRates,
    pub triple: Option<TripleTree>,
    pub tree: Option<LabeledTree>,
    /// Factor applied to a directly supplied `Q` to bring it into the
    /// normalized gauge, when it differed from one.
    pub rescaled_by: Option<f64>,
}

fn square(rows: &[Vec<f64>], kappa: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != kappa || rows.iter().any(|r| r.len() != kappa) {
        return Err(Error::validation(format!("{what} must be {kappa}x{kappa}")));
    }
    Ok(DMatrix::from_fn(kappa, kappa, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn load(&self) -> Result<LoadedModel> {
        if self.pi.len() != self.kappa {
            return Err(Error::validation(format!("pi has {} entries, kappa is {}", self.pi.len(), self.kappa)));
        }
        let pi = StateDistribution::new(self.pi.clone())?;
        let (model, rescaled_by) = match (&self.exchangeabilities, &self.q) {
            (Some(s), None) => {
                (GtrModel::from_exchangeabilities(&square(s, self.kappa, "exchangeabilities")?, pi)?, None)
            }
            (None, Some(q)) => {
                let (q, factor) = GtrRateMatrix::normalized(square(q, self.kappa, "Q")?, &pi)?;
                let rescaled = if (factor - 1.0).abs() > 1e-12 { Some(factor) } else { None };
                (GtrModel::new(pi, q)?, rescaled)
            }
            _ => return Err(Error::validation("give exactly one of \"exchangeabilities\" and \"Q\"")),
        };
        let rates = GammaRates::new(self.alpha)?;
        let triple = self.edge_lengths.map(|e| TripleTree::new(e.a, e.b, e.c)).transpose()?;
        let tree = self.tree.as_deref().map(LabeledTree::from_newick).transpose()?;
        Ok(LoadedModel { model, rates, triple, tree, rescaled_by })
    }

    pub fn from_model(model: &GtrModel, alpha: f64, triple: Option<TripleTree>) -> Self {
        Self {
            kappa: model.kappa(),
            pi: model.pi.as_slice().to_vec(),
            exchangeabilities: None,
            q: Some(rows(model.q.matrix())),
            alpha,
            edge_lengths: triple.map(|t| t.lengths().into()),
            tree: None,
        }
    }
}

pub fn parse_model_json(text: &str) -> Result<LoadedModel> {
    serde_json::from_str::<ModelFile>(text)?.load()
}

pub fn read_model(path: &Path) -> Result<LoadedModel> {
    parse_model_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub kappa: usize,
    pub taxa: Vec<String>,
    pub p: Vec<f64>,
}

impl From<&JointTensor> for TensorFile {
    fn from(j: &JointTensor) -> Self {
        Self { kappa: j.kappa(), taxa: j.taxa().to_vec(), p: j.probabilities().to_vec() }
    }
}

impl TryFrom<TensorFile> for JointTensor {
    type Error = Error;
    fn try_from(f: TensorFile) -> Result<Self> {
        JointTensor::new(f.kappa, f.taxa, f.p)
    }
}

pub fn tensor_to_binary(joint: &JointTensor) -> Vec<u8> {
    let p = joint.probabilities();
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 8 * p.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(joint.kappa() as u32).to_le_bytes());
    out.extend_from_slice(&(joint.n_taxa() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for x in p {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Binary files carry no taxon names; taxa are labelled `a, b, …`.
pub fn tensor_from_binary(bytes: &[u8]) -> Result<JointTensor> {
    if bytes.len() < TENSOR_HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Format("missing GTRJ header".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("four bytes")) as usize;
    let (kappa, n) = (word(4), word(8));
    let count = u32::try_from(kappa)
        .ok()
        .and_then(|k| k.checked_pow(n as u32))
        .ok_or_else(|| Error::Format(format!("kappa^n overflows for kappa={kappa}, n={n}")))? as usize;
    let body = &bytes[TENSOR_HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * count, body.len())));
    }
    let p = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    JointTensor::new(kappa, default_taxa(n), p)
}

/// Reads either format, deciding by the leading magic bytes.
pub fn read_tensor(path: &Path) -> Result<JointTensor> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        return tensor_from_binary(&bytes);
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::from_str::<TensorFile>(text)?.try_into()
}

pub fn write_tensor(path: &Path, joint: &JointTensor, binary: bool) -> Result<()> {
    if binary {
        std::fs::write(path, tensor_to_binary(joint))?;
    } else {
        std::fs::write(path, serde_json::to_string(&TensorFile::from(joint))? + "\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    #[serde(rename = "type")]
    pub kind: String,
    pub b: Option<f64>,
    pub c: Option<f64>,
    /// Generic regime only: the eigen-indices `(i, j)` used, 0-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<[usize; 2]>,
    pub permutation: Vec<usize>,
    pub column_signs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub beta: f64,
    pub iterations: usize,
    pub bracket: [f64; 2],
    pub equation: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredFile {
    pub taxa: Vec<String>,
    pub pi: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub alpha: f64,
    pub edge_lengths: EdgeLengths,
    pub eigenvalues: Vec<f64>,
    pub regime: RegimeReport,
    pub residual: f64,
    pub beta_solver: BetaReport,
}

impl From<&RecoveredModel> for RecoveredFile {
    fn from(r: &RecoveredModel) -> Self {
        let (b, c, pair) = match r.regime.kind {
            RegimeKind::Generic { i, j } => (None, None, Some([i, j])),
            RegimeKind::CaseA1 { b, c } | RegimeKind::CaseA2 { b, c } => (Some(b), Some(c), None),
            RegimeKind::CaseB => (None, None, None),
        };
        Self {
            taxa: r.taxa.clone(),
            pi: r.pi.as_slice().to_vec(),
            q: rows(r.q.matrix()),
            alpha: r.alpha,
            edge_lengths: r.edge_lengths().into(),
            eigenvalues: r.lambdas.clone(),
            regime: RegimeReport {
                kind: r.regime.kind.name().to_string(),
                b,
                c,
                pair,
                permutation: r.regime.permutation.clone(),
                column_signs: r.regime.column_signs.clone(),
            },
            residual: r.residual,
            beta_solver: BetaReport {
                beta: r.beta.beta,
                iterations: r.beta.iterations,
                bracket: r.beta.bracket,
                equation: r.equation.labels.iter().cloned().zip(r.equation.values).collect(),
            },
        }
    }
}

/// Model block written next to the Newick tree for more than three taxa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledFile {
    pub taxa: Vec<String>,
    pub pi: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub alpha: f64,
    pub newick: String,
    pub distances: Vec<Vec<f64>>,
    pub consistency: ConsistencyReport,
    pub four_point_residual: f64,
    pub fit_residual: f64,
}

impl AssembledFile {
    pub fn new(a: &AssembledDistances, fit: &TreeFit) -> Self {
        Self {
            taxa: a.distances.labels().to_vec(),
            pi: a.pi.as_slice().to_vec(),
            q: rows(a.q.matrix()),
            alpha: a.alpha,
            newick: fit.tree.to_newick(),
            distances: rows(a.distances.matrix()),
            consistency: a.report,
            four_point_residual: fit.four_point_residual,
            fit_residual: fit.fit_residual,
        }
    }
}
