//! Seeded random search over the boosting hyper-parameter space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{multirmse_flat, train, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Inclusive sampling ranges. Defaults: 100..=2000 trees in steps of 25,
/// depth 5..=25 (clamped to 12 at training time), 40-80% of features,
/// min leaf weight 5..=100 in steps of 25, learning rate 0.001..=0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSpace {
    pub n_estimators: (usize, usize),
    pub n_estimators_step: usize,
    pub max_depth: (usize, usize),
    pub feature_fraction: (f64, f64),
    pub min_samples_leaf: (usize, usize),
    pub min_samples_leaf_step: usize,
    pub learning_rate: (f64, f64),
    /// Held fixed across trials.
    pub max_borders: usize,
    pub early_stopping_rounds: Option<usize>,
}

impl Default for TuneSpace {
    fn default() -> Self {
        TuneSpace {
            n_estimators: (100, 2000),
            n_estimators_step: 25,
            max_depth: (5, 25),
            feature_fraction: (0.4, 0.8),
            min_samples_leaf: (5, 100),
            min_samples_leaf_step: 25,
            learning_rate: (0.001, 0.2),
            max_borders: 32,
            early_stopping_rounds: Some(50),
        }
    }
}

impl TuneSpace {
    fn stepped<R: Rng>(rng: &mut R, (lo, hi): (usize, usize), step: usize) -> usize {
        let steps = (hi - lo) / step.max(1);
        lo + step.max(1) * rng.random_range(0..=steps)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TrainConfig {
        let n_estimators = Self::stepped(rng, self.n_estimators, self.n_estimators_step);
        let max_depth = rng.random_range(self.max_depth.0..=self.max_depth.1);
        let feature_fraction = rng.random_range(self.feature_fraction.0..=self.feature_fraction.1);
        let min_samples_leaf = Self::stepped(rng, self.min_samples_leaf, self.min_samples_leaf_step);
        let learning_rate = rng.random_range(self.learning_rate.0..=self.learning_rate.1);
        let seed = rng.random::<u32>() as u64;
        TrainConfig {
            n_estimators,
            max_depth,
            max_borders: self.max_borders,
            min_samples_leaf,
            learning_rate,
            feature_fraction,
            seed,
            early_stopping_rounds: self.early_stopping_rounds,
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n_estimators.0 <= self.n_estimators.1
            && self.max_depth.0 <= self.max_depth.1
            && self.min_samples_leaf.0 <= self.min_samples_leaf.1
            && self.feature_fraction.0 > 0.0
            && self.feature_fraction.0 <= self.feature_fraction.1
            && self.feature_fraction.1 <= 1.0
            && self.learning_rate.0 > 0.0
            && self.learning_rate.0 <= self.learning_rate.1
            && self.learning_rate.1 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("malformed tuning space {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    pub valid_multirmse: f64,
    pub n_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TrainConfig,
    pub best_index: usize,
    pub best_valid_multirmse: f64,
    pub trials: Vec<Trial>,
}

/// Trains `n_trials` sampled configurations and keeps the one with the lowest
/// validation MultiRMSE (standardized units; first trial wins ties).
pub fn random_search_tune(
    train_set: &Dataset,
    valid: &Dataset,
    space: &TuneSpace,
    n_trials: usize,
    seed: u64,
) -> Result<TuneResult> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    if valid.is_empty() {
        return Err(Error::InvalidArgument("tuning needs a validation fold".into()));
    }
    space.validate()?;
    let mut rng = rng::stream(seed, 0x7E57);
    let mut trials = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let config = space.sample(&mut rng);
        let model = train(train_set, valid, &config)?;
        let m = model.encode(valid)?;
        let pred: Vec<f64> = model
            .predict_standardized(&m, model.n_trees())
            .into_iter()
            .flatten()
            .collect();
        let y: Vec<f64> = valid
            .records
            .iter()
            .flat_map(|r| model.standardization.standardize(&r.targets))
            .collect();
        let score = multirmse_flat(&pred, &y, &valid.weights(), model.n_targets());
        log::info!(
            "trial {index}: {} trees depth {} lr {:.4} -> valid MultiRMSE {score:.5}",
            model.n_trees(),
            config.effective_depth(),
            config.learning_rate
        );
        trials.push(Trial {
            index,
            config,
            valid_multirmse: score,
            n_trees: model.n_trees(),
        });
    }
    let best_index = trials.iter().fold(0, |b, t| {
        if t.valid_multirmse < trials[b].valid_multirmse {
            t.index
        } else {
            b
        }
    });
    Ok(TuneResult {
        best: trials[best_index].config.clone(),
        best_index,
        best_valid_multirmse: trials[best_index].valid_multirmse,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::dataset;

    fn small_space() -> TuneSpace {
        TuneSpace {
            n_estimators: (10, 60),
            n_estimators_step: 25,
            max_depth: (2, 4),
            min_samples_leaf: (1, 6),
            min_samples_leaf_step: 5,
            ..TuneSpace::default()
        }
    }

    fn folds() -> (Dataset, Dataset) {
        let ds = dataset(80);
        (
            ds.subset(&(0..60).collect::<Vec<_>>()),
            ds.subset(&(60..80).collect::<Vec<_>>()),
        )
    }

    #[test]
    fn single_trial_returns_its_config() {
        let (tr, va) = folds();
        let res = random_search_tune(&tr, &va, &small_space(), 1, 3).unwrap();
        assert_eq!(res.trials.len(), 1);
        assert_eq!(res.best, res.trials[0].config);
    }

    #[test]
    fn search_is_deterministic_and_picks_argmin() {
        let (tr, va) = folds();
        let a = random_search_tune(&tr, &va, &small_space(), 4, 11).unwrap();
        let b = random_search_tune(&tr, &va, &small_space(), 4, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.trials.iter().all(|t| a.best_valid_multirmse <= t.valid_multirmse));
    }

    #[test]
    fn samples_respect_the_grid() {
        let space = TuneSpace::default();
        let mut rng = rng::stream(1, 2);
        for _ in 0..200 {
            let c = space.sample(&mut rng);
            assert!((100..=2000).contains(&c.n_estimators) && c.n_estimators % 25 == 0);
            assert!((5..=25).contains(&c.max_depth));
            assert!(c.effective_depth() <= crate::gbdt::MAX_OBLIVIOUS_DEPTH);
            assert!((0.4..=0.8).contains(&c.feature_fraction));
            assert!((0.001..=0.2).contains(&c.learning_rate));
            assert!([5, 30, 55, 80].contains(&c.min_samples_leaf));
        }
    }
}
