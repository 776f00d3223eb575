//! Single-target reference learners: a CART regression tree, a bagged random
//! forest and an elastic net. All of them consume the boosting model's
//! encoded feature matrix so comparisons isolate the learner.

mod cart;
mod elastic_net;
mod forest;

pub use cart::{train_decision_tree, DecisionTree, DecisionTreeModel, Node, TreeConfig};
pub use elastic_net::{train_elastic_net, ElasticNetConfig, ElasticNetModel};
pub use forest::{train_random_forest, ForestConfig, RandomForestModel};

use crate::data::Dataset;
use crate::encoding::{transform, CategoricalEncoder, FeatureMatrix};
use crate::error::{Error, Result};

/// A training fold together with its encoder and leakage-free matrix.
#[derive(Debug, Clone)]
pub struct EncodedFold<'a> {
    pub data: &'a Dataset,
    pub encoder: CategoricalEncoder,
    pub matrix: FeatureMatrix,
}

impl<'a> EncodedFold<'a> {
    /// Encodes exactly as boosting with `config` would.
    pub fn new(data: &'a Dataset, config: &crate::gbdt::TrainConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingFold);
        }
        data.ensure_valid()?;
        let (encoder, matrix) = crate::gbdt::training_matrix(data, config)?;
        Ok(EncodedFold { data, encoder, matrix })
    }

    fn target(&self, dim: usize) -> Result<Vec<f64>> {
        if dim >= self.data.schema.n_targets() {
            return Err(Error::InvalidArgument(format!("target dimension {dim} out of range")));
        }
        Ok(self.data.target_column(dim))
    }
}

fn encode_for(encoder: &CategoricalEncoder, fingerprint: &str, data: &Dataset) -> Result<FeatureMatrix> {
    let fp = data.schema.fingerprint();
    if fp != fingerprint {
        return Err(Error::SchemaMismatch(format!(
            "model expects schema {fingerprint}, data has {fp}"
        )));
    }
    transform(encoder, &data.schema, &data.records)
}
