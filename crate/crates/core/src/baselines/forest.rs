use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{BinnedMatrix, DecisionTree, Grower, TreeConfig};
use super::{encode_for, EncodedFold};
use crate::data::Dataset;
use crate::encoding::{CategoricalEncoder, FeatureMatrix};
use crate::error::{Error, Result};
use crate::persist::{ModelHeader, ModelKind};
use crate::proximity::LeafMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of usable features considered at each node.
    pub max_features: f64,
    pub bootstrap: bool,
    pub seed: u64,
    pub max_borders: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
            max_borders: 254,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub header: ModelHeader,
    pub target_dim: usize,
    pub config: ForestConfig,
    pub encoder: CategoricalEncoder,
    pub trees: Vec<DecisionTree>,
}

impl RandomForestModel {
    /// Unweighted mean of the member trees, accumulated in tree order.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Vec<f64> {
        let n = self.trees.len() as f64;
        (0..matrix.n_rows())
            .map(|r| self.trees.iter().map(|t| t.predict_row(matrix, r)).sum::<f64>() / n)
            .collect()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict_matrix(&self.encode(data)?))
    }

    pub fn encode(&self, data: &Dataset) -> Result<FeatureMatrix> {
        encode_for(&self.encoder, &self.header.schema_fingerprint, data)
    }

    pub fn apply_leaves_matrix(&self, matrix: &FeatureMatrix) -> LeafMatrix {
        let mut leaves = Vec::with_capacity(matrix.n_rows() * self.trees.len());
        for r in 0..matrix.n_rows() {
            leaves.extend(self.trees.iter().map(|t| t.leaf_id(matrix, r)));
        }
        LeafMatrix::new(matrix.n_rows(), self.trees.len(), leaves)
    }

    pub fn apply_leaves(&self, data: &Dataset) -> Result<LeafMatrix> {
        Ok(self.apply_leaves_matrix(&self.encode(data)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.header.check(ModelKind::RandomForest)?;
        Ok(m)
    }
}

/// Bagged CART trees with per-node feature subsampling. Tree `t` draws its
/// bootstrap sample and feature subsets from its own seed-derived stream, so
/// the forest does not depend on the thread count.
pub fn train_random_forest(fold: &EncodedFold, target_dim: usize, config: &ForestConfig) -> Result<RandomForestModel> {
    if config.n_estimators == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    if !(config.max_features > 0.0 && config.max_features <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "max_features {} outside (0, 1]",
            config.max_features
        )));
    }
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_borders: config.max_borders,
    };
    tree_config.validate()?;
    let y = fold.target(target_dim)?;
    let w = fold.data.weights();
    let n = y.len();
    let binned = BinnedMatrix::new(&fold.matrix, config.max_borders)?;
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(config.seed, t as u64);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Grower {
                binned: &binned,
                y: &y,
                w: &w,
                config: &tree_config,
                feature_draw: Some((config.max_features, &mut rng)),
            }
            .grow(rows)
        })
        .collect();
    Ok(RandomForestModel {
        header: ModelHeader::new(ModelKind::RandomForest, fold.data.schema.fingerprint()),
        target_dim,
        config: config.clone(),
        encoder: fold.encoder.clone(),
        trees,
    })
}
