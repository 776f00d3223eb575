//! Multi-output gradient boosting on oblivious (symmetric) trees.
//!
//! Targets are standardized per dimension on the training fold and the
//! ensemble starts from a zero prediction in that space. Each round fits one
//! oblivious tree to the weighted residuals under a squared-error criterion
//! summed over all target dimensions. `error_trace[t]` is the training
//! MultiRMSE (standardized units) after `t` trees, `error_trace[0]` being the
//! base prediction's error.

mod train;
mod tune;

pub use train::{train, training_matrix, TrainConfig, MAX_OBLIVIOUS_DEPTH};
pub use tune::{random_search_tune, Trial, TuneResult, TuneSpace};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema};
use crate::encoding::{transform, CategoricalEncoder, FeatureMatrix, NumericBorders};
use crate::error::{Error, Result};
use crate::persist::{ModelHeader, ModelKind};
use crate::proximity::LeafMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

/// A depth-`d` tree applying the same condition to every node of a level.
/// Bit `k` of a leaf index is set iff `x[splits[k].feature] > splits[k].threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliviousTree {
    pub splits: Vec<Split>,
    /// `2^d` leaves, each a vector over target dimensions (standardized units).
    pub leaf_values: Vec<Vec<f64>>,
    /// Sum of training sample weights per leaf.
    #[serde(default)]
    pub leaf_weights: Vec<f64>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.splits.len()
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.splits.len()
    }

    pub fn has_covers(&self) -> bool {
        self.leaf_weights.len() == self.n_leaves()
    }

    #[inline]
    pub fn leaf_index(&self, matrix: &FeatureMatrix, row: usize) -> usize {
        self.splits.iter().enumerate().fold(0, |idx, (k, s)| {
            idx | (usize::from(matrix.get(row, s.feature) > s.threshold) << k)
        })
    }

    pub fn leaf_index_of(&self, x: &[f64]) -> usize {
        self.splits
            .iter()
            .enumerate()
            .fold(0, |idx, (k, s)| idx | (usize::from(x[s.feature] > s.threshold) << k))
    }
}

/// Per-dimension affine map between raw and standardized target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Population mean/std per column; a zero or non-finite std becomes 1.
    pub fn fit(targets: &[Vec<f64>], dims: usize) -> Self {
        let n = targets.len().max(1) as f64;
        let mut mean = vec![0.0; dims];
        let mut std = vec![0.0; dims];
        for d in 0..dims {
            let m = targets.iter().map(|t| t[d]).sum::<f64>() / n;
            let var = targets.iter().map(|t| (t[d] - m).powi(2)).sum::<f64>() / n;
            mean[d] = if m.is_finite() { m } else { 0.0 };
            let s = var.sqrt();
            std[d] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        }
        Standardization { mean, std }
    }

    pub fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(d, v)| (v - self.mean[d]) / self.std[d])
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(d, v)| self.mean[d] + self.std[d] * v)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub header: ModelHeader,
    pub config: TrainConfig,
    pub schema: FeatureSchema,
    pub standardization: Standardization,
    /// Starting point in standardized space (all zeros).
    pub base_prediction: Vec<f64>,
    pub encoder: CategoricalEncoder,
    pub borders: NumericBorders,
    pub trees: Vec<ObliviousTree>,
    pub error_trace: Vec<f64>,
}

impl GbdtModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_targets(&self) -> usize {
        self.base_prediction.len()
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let fp = schema.fingerprint();
        if fp != self.header.schema_fingerprint {
            return Err(Error::SchemaMismatch(format!(
                "model expects schema {}, data has {}",
                self.header.schema_fingerprint, fp
            )));
        }
        Ok(())
    }

    /// Inference-time feature matrix for `data`.
    pub fn encode(&self, data: &Dataset) -> Result<FeatureMatrix> {
        self.check_schema(&data.schema)?;
        transform(&self.encoder, &data.schema, &data.records)
    }

    /// Predictions in raw target units, one vector per record.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let m = self.encode(data)?;
        Ok(self.predict_matrix(&m, self.trees.len()))
    }

    /// Raw-unit predictions using the first `n_trees` trees.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix, n_trees: usize) -> Vec<Vec<f64>> {
        self.predict_standardized(matrix, n_trees)
            .into_iter()
            .map(|z| self.standardization.destandardize(&z))
            .collect()
    }

    /// Standardized-unit predictions using the first `n_trees` trees.
    pub fn predict_standardized(&self, matrix: &FeatureMatrix, n_trees: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.base_prediction.clone(); matrix.n_rows()];
        for tree in &self.trees[..n_trees.min(self.trees.len())] {
            for (row, acc) in out.iter_mut().enumerate() {
                let leaf = &tree.leaf_values[tree.leaf_index(matrix, row)];
                for (a, v) in acc.iter_mut().zip(leaf) {
                    *a += v;
                }
            }
        }
        out
    }

    /// Leaf index of every record in every tree.
    pub fn apply_leaves(&self, data: &Dataset) -> Result<LeafMatrix> {
        let m = self.encode(data)?;
        Ok(self.apply_leaves_matrix(&m))
    }

    pub fn apply_leaves_matrix(&self, matrix: &FeatureMatrix) -> LeafMatrix {
        let n_trees = self.trees.len();
        let mut leaves = Vec::with_capacity(matrix.n_rows() * n_trees);
        for row in 0..matrix.n_rows() {
            leaves.extend(self.trees.iter().map(|t| t.leaf_index(matrix, row) as u32));
        }
        LeafMatrix::new(matrix.n_rows(), n_trees, leaves)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: GbdtModel = serde_json::from_str(s)?;
        model.header.check(ModelKind::Gbdt)?;
        Ok(model)
    }
}

/// Weighted multi-target RMSE:
/// `sqrt(sum_i sum_d (p_id - y_id)^2 w_i / sum_i w_i)`.
pub fn multirmse(pred: &[Vec<f64>], actual: &[Vec<f64>], weights: Option<&[f64]>) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pred.len() != actual.len() || weights.is_some_and(|w| w.len() != pred.len()) {
        return Err(Error::InvalidArgument("multirmse inputs differ in length".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (p, y)) in pred.iter().zip(actual).enumerate() {
        if p.len() != y.len() {
            return Err(Error::InvalidArgument("multirmse dimension mismatch".into()));
        }
        let w = weights.map_or(1.0, |w| w[i]);
        let sq: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        num += sq * w;
        den += w;
    }
    Ok((num / den).sqrt())
}

/// Flat-layout MultiRMSE used inside the boosting loop; must add up in the
/// same order as [`multirmse`].
pub(crate) fn multirmse_flat(pred: &[f64], actual: &[f64], weights: &[f64], dims: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let base = i * dims;
        let sq: f64 = (0..dims)
            .map(|d| {
                let e = pred[base + d] - actual[base + d];
                e * e
            })
            .sum();
        num += sq * w;
        den += w;
    }
    (num / den).sqrt()
}
