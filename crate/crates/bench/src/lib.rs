//! Shared fixtures for the benchmarks.

use relval_core::gbdt::train;
use relval_core::synthgen::{generate_market, GeneratorConfig};
use relval_core::{Dataset, GbdtModel, TrainConfig};

/// A synthetic universe of `n_bonds` records.
pub fn universe(n_bonds: usize, seed: u64) -> Dataset {
    generate_market(&GeneratorConfig {
        n_bonds,
        seed,
        trade_orders_per_day: 1,
        order_days: 1,
        horizon_days: 1,
        ..GeneratorConfig::default()
    })
    .expect("valid generator config")
    .dataset
}

pub fn bench_train_config(n_estimators: usize) -> TrainConfig {
    TrainConfig {
        n_estimators,
        max_depth: 6,
        ..TrainConfig::default()
    }
}

/// A model fitted on the whole of `data`.
pub fn fitted(data: &Dataset, n_estimators: usize) -> GbdtModel {
    train(data, &data.subset(&[]), &bench_train_config(n_estimators)).expect("training succeeds")
}
