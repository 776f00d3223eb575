//! End-to-end training: winsorize, split, weight, encode, boost, evaluate.

use serde::{Deserialize, Serialize};

use crate::data::{compute_sample_weights, split_dataset, winsorize_targets, Dataset, SplitIndices};
use crate::error::Result;
use crate::gbdt::{multirmse, train, GbdtModel, TrainConfig};
use crate::metrics::{evaluate, RegressionMetrics};
use crate::proximity::ProximityIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Percentile band, in percent.
    pub winsorize: (f64, f64),
    pub split_fractions: (f64, f64, f64),
    pub split_seed: u64,
    pub weight_window_days: u32,
    pub weight_floor: f64,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            winsorize: (1.0, 99.0),
            split_fractions: (0.64, 0.16, 0.20),
            split_seed: 0,
            weight_window_days: 183,
            weight_floor: 0.1,
            train: TrainConfig::default(),
        }
    }
}

/// Weighted train/valid/test folds.
#[derive(Debug, Clone)]
pub struct Folds {
    pub split: SplitIndices,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

pub fn prepare_folds(data: &Dataset, config: &PipelineConfig) -> Result<Folds> {
    data.ensure_valid()?;
    let clipped = winsorize_targets(data, config.winsorize.0, config.winsorize.1)?;
    let weights = compute_sample_weights(&clipped, config.weight_window_days, config.weight_floor)?;
    let weighted = clipped.with_weights(weights);
    let split = split_dataset(&weighted, config.split_seed, config.split_fractions)?;
    Ok(Folds {
        train: weighted.subset(&split.train),
        valid: weighted.subset(&split.valid),
        test: weighted.subset(&split.test),
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: String,
    #[serde(flatten)]
    pub metrics: RegressionMetrics,
}

/// One row of the per-fold quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: String,
    pub records: usize,
    /// Weighted, in target units.
    pub multirmse: f64,
    pub targets: Vec<TargetMetrics>,
}

/// Weighted metrics of `predictions` against `data`'s targets.
pub fn fold_metrics(fold: &str, data: &Dataset, predictions: &[Vec<f64>]) -> Result<FoldMetrics> {
    let weights = data.weights();
    let actual = data.targets();
    let targets = data
        .schema
        .target_names
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let pred: Vec<f64> = predictions.iter().map(|p| p[d]).collect();
            Ok(TargetMetrics {
                target: name.clone(),
                metrics: evaluate(&pred, &data.target_column(d), Some(&weights))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldMetrics {
        fold: fold.to_string(),
        records: data.len(),
        multirmse: multirmse(predictions, &actual, Some(&weights))?,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_trees: usize,
    pub folds: Vec<FoldMetrics>,
}

pub fn evaluate_model(model: &GbdtModel, folds: &Folds) -> Result<TrainingReport> {
    let mut rows = Vec::new();
    for (name, data) in [("train", &folds.train), ("valid", &folds.valid), ("test", &folds.test)] {
        if data.is_empty() {
            continue;
        }
        rows.push(fold_metrics(name, data, &model.predict(data)?)?);
    }
    Ok(TrainingReport {
        n_trees: model.n_trees(),
        folds: rows,
    })
}

pub fn run_training(data: &Dataset, config: &PipelineConfig) -> Result<(GbdtModel, Folds, TrainingReport)> {
    let folds = prepare_folds(data, config)?;
    let model = train(&folds.train, &folds.valid, &config.train)?;
    let report = evaluate_model(&model, &folds)?;
    Ok((model, folds, report))
}

/// Similarity model fitted on a whole universe without a validation fold,
/// together with the universe's proximity index.
pub fn fit_similarity(universe: &Dataset, config: &TrainConfig) -> Result<(GbdtModel, ProximityIndex)> {
    let model = train(universe, &universe.subset(&[]), config)?;
    let index = ProximityIndex::from_gbdt(&model, universe)?;
    Ok((model, index))
}
