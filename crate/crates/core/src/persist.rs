//! Versioned JSON envelope shared by every persisted model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    DecisionTree,
    RandomForest,
    ElasticNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub version: String,
    pub kind: ModelKind,
    pub schema_fingerprint: String,
}

impl ModelHeader {
    pub fn new(kind: ModelKind, schema_fingerprint: String) -> Self {
        ModelHeader {
            version: FORMAT_VERSION.to_string(),
            kind,
            schema_fingerprint,
        }
    }

    pub fn check(&self, kind: ModelKind) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.version.clone()));
        }
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {kind:?} model, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}
