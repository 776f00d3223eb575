//! Supervised bond similarity from multi-output boosted oblivious trees,
//! with cohort-based relative valuation and a ranking back-test.

// negated float comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod baselines;
pub mod data;
pub mod encoding;
pub mod error;
pub mod explain;
pub mod gbdt;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod proximity;
pub mod rng;
pub mod synthgen;
pub mod valuation;

pub use data::{BondRecord, Dataset, FeatureKind, FeatureSchema, FeatureSpec, FeatureValue, SplitIndices};
pub use error::{Error, Result};
pub use gbdt::{GbdtModel, ObliviousTree, TrainConfig};
pub use proximity::{LeafMatrix, ProximityIndex};
