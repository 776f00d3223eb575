use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{multirmse_flat, GbdtModel, ObliviousTree, Split, Standardization};
use crate::data::Dataset;
use crate::encoding::{bin_of, fit_ordered_encoding, transform, CategoricalEncoder, FeatureMatrix, NumericBorders};
use crate::error::{Error, Result};
use crate::persist::{ModelHeader, ModelKind};
use crate::rng;

/// 2^12 leaves per tree; deeper oblivious trees are clamped to this.
pub const MAX_OBLIVIOUS_DEPTH: usize = 12;

/// Target dimension driving the categorical encoding (OAS).
const ENCODING_TARGET_DIM: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_borders: usize,
    /// Leaves whose summed sample weight falls below this keep a zero value.
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub feature_fraction: f64,
    pub seed: u64,
    pub early_stopping_rounds: Option<usize>,
    pub prior_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_estimators: 500,
            max_depth: 6,
            max_borders: 32,
            min_samples_leaf: 1,
            learning_rate: 0.1,
            feature_fraction: 1.0,
            seed: 0,
            early_stopping_rounds: None,
            prior_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "feature_fraction {} outside (0, 1]",
                self.feature_fraction
            )));
        }
        if !(1..=254).contains(&self.max_borders) {
            return Err(Error::InvalidArgument(format!(
                "max_borders {} outside [1, 254]",
                self.max_borders
            )));
        }
        if !(self.prior_weight > 0.0) {
            return Err(Error::InvalidArgument("prior_weight must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_depth(&self) -> usize {
        self.max_depth.min(MAX_OBLIVIOUS_DEPTH)
    }
}

/// The ordered-encoded training matrix exactly as `train` builds it.
pub fn training_matrix(train: &Dataset, config: &TrainConfig) -> Result<(CategoricalEncoder, FeatureMatrix)> {
    fit_ordered_encoding(
        train,
        ENCODING_TARGET_DIM,
        rng::mix_seed(config.seed, 0xE1C),
        config.prior_weight,
    )
}

/// Fits a boosted ensemble on `train`; `valid` (possibly empty) drives
/// optional early stopping.
pub fn train(train: &Dataset, valid: &Dataset, config: &TrainConfig) -> Result<GbdtModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingFold);
    }
    train.ensure_valid()?;
    if valid.schema.fingerprint() != train.schema.fingerprint() {
        return Err(Error::SchemaMismatch("train and valid schemas differ".into()));
    }
    let dims = train.schema.n_targets();
    let n = train.len();

    let (encoder, matrix) = training_matrix(train, config)?;
    let borders = NumericBorders::fit(&matrix, config.max_borders)?;
    let usable: Vec<usize> = (0..matrix.n_cols())
        .filter(|&c| !borders.per_feature[c].is_empty())
        .collect();

    let targets = train.targets();
    let standardization = Standardization::fit(&targets, dims);
    let y: Vec<f64> = targets.iter().flat_map(|t| standardization.standardize(t)).collect();
    let targets_vary = (0..dims).any(|d| {
        let first = targets[0][d];
        targets.iter().any(|t| t[d] != first)
    });
    if usable.is_empty() && targets_vary {
        return Err(Error::NoUsableFeatures);
    }

    let weights = train.weights();
    let bins: Vec<Vec<u8>> = (0..matrix.n_cols())
        .map(|c| {
            let b = &borders.per_feature[c];
            if b.is_empty() {
                Vec::new()
            } else {
                matrix.column(c).iter().map(|&v| bin_of(b, v) as u8).collect()
            }
        })
        .collect();

    let valid_matrix = if valid.is_empty() {
        None
    } else {
        Some(transform(&encoder, &valid.schema, &valid.records)?)
    };
    let valid_y: Vec<f64> = valid
        .records
        .iter()
        .flat_map(|r| standardization.standardize(&r.targets))
        .collect();
    let valid_w = valid.weights();

    let mut pred = vec![0.0; n * dims];
    let mut error_trace = vec![multirmse_flat(&pred, &y, &weights, dims)];
    let mut valid_pred = vec![0.0; valid.len() * dims];
    let mut best_valid = valid_matrix
        .as_ref()
        .map(|_| multirmse_flat(&valid_pred, &valid_y, &valid_w, dims));
    let mut best_len = 0usize;

    let depth = config.effective_depth();
    let mut feature_rng = rng::stream(config.seed, 0xFEA7);
    let mut trees: Vec<ObliviousTree> = Vec::with_capacity(config.n_estimators);
    let mut wr = vec![0.0; n * dims];
    let mut leaf = vec![0u32; n];

    for _ in 0..config.n_estimators {
        let subset = draw_features(&usable, config.feature_fraction, &mut feature_rng);
        for i in 0..n {
            for d in 0..dims {
                wr[i * dims + d] = weights[i] * (y[i * dims + d] - pred[i * dims + d]);
            }
        }
        leaf.iter_mut().for_each(|l| *l = 0);

        let mut splits = Vec::with_capacity(depth);
        for level in 0..depth {
            let mut occupied = vec![false; 1 << level];
            for &l in &leaf {
                occupied[l as usize] = true;
            }
            let ctx = LevelContext {
                leaf: &leaf,
                occupied: &occupied,
                weights: &weights,
                wr: &wr,
                dims,
                n_leaves: 1 << level,
                min_weight: config.min_samples_leaf as f64,
            };
            let candidates: Vec<Option<(f64, usize)>> = subset
                .par_iter()
                .map(|&f| ctx.best_threshold(&bins[f], borders.per_feature[f].len() + 1))
                .collect();
            let mut best: Option<(f64, usize, usize)> = None;
            for (&f, cand) in subset.iter().zip(candidates) {
                if let Some((gain, k)) = cand {
                    if best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, f, k));
                    }
                }
            }
            let Some((gain, f, k)) = best else { break };
            if !(gain > 0.0) {
                break;
            }
            splits.push(Split {
                feature: f,
                threshold: borders.per_feature[f][k],
            });
            let col = &bins[f];
            for (l, &b) in leaf.iter_mut().zip(col) {
                if usize::from(b) > k {
                    *l |= 1 << level;
                }
            }
        }

        let n_leaves = 1usize << splits.len();
        let mut leaf_weights = vec![0.0; n_leaves];
        let mut leaf_sums = vec![0.0; n_leaves * dims];
        for i in 0..n {
            let l = leaf[i] as usize;
            leaf_weights[l] += weights[i];
            for d in 0..dims {
                leaf_sums[l * dims + d] += wr[i * dims + d];
            }
        }
        let leaf_values: Vec<Vec<f64>> = (0..n_leaves)
            .map(|l| {
                let w = leaf_weights[l];
                if w > 0.0 && w >= config.min_samples_leaf as f64 {
                    (0..dims)
                        .map(|d| config.learning_rate * leaf_sums[l * dims + d] / w)
                        .collect()
                } else {
                    vec![0.0; dims]
                }
            })
            .collect();
        for i in 0..n {
            let v = &leaf_values[leaf[i] as usize];
            for d in 0..dims {
                pred[i * dims + d] += v[d];
            }
        }
        error_trace.push(multirmse_flat(&pred, &y, &weights, dims));
        let tree = ObliviousTree {
            splits,
            leaf_values,
            leaf_weights,
        };

        if let (Some(vm), Some(best)) = (&valid_matrix, best_valid.as_mut()) {
            for row in 0..vm.n_rows() {
                let v = &tree.leaf_values[tree.leaf_index(vm, row)];
                for d in 0..dims {
                    valid_pred[row * dims + d] += v[d];
                }
            }
            let score = multirmse_flat(&valid_pred, &valid_y, &valid_w, dims);
            trees.push(tree);
            if score < *best {
                *best = score;
                best_len = trees.len();
            } else if let Some(rounds) = config.early_stopping_rounds {
                if trees.len() - best_len >= rounds {
                    log::debug!("early stop at {} trees, best {}", trees.len(), best_len);
                    break;
                }
            }
        } else {
            trees.push(tree);
        }
    }

    if config.early_stopping_rounds.is_some() && best_valid.is_some() {
        trees.truncate(best_len);
        error_trace.truncate(best_len + 1);
    }

    Ok(GbdtModel {
        header: ModelHeader::new(ModelKind::Gbdt, train.schema.fingerprint()),
        config: config.clone(),
        schema: train.schema.clone(),
        standardization,
        base_prediction: vec![0.0; dims],
        encoder,
        borders,
        trees,
        error_trace,
    })
}

fn draw_features(usable: &[usize], fraction: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    if usable.is_empty() {
        return Vec::new();
    }
    let m = ((fraction * usable.len() as f64).round() as usize).clamp(1, usable.len());
    if m == usable.len() {
        return usable.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, usable.len(), m).into_iter().map(|i| usable[i]).collect();
    picked.sort_unstable();
    picked
}

struct LevelContext<'a> {
    leaf: &'a [u32],
    occupied: &'a [bool],
    weights: &'a [f64],
    wr: &'a [f64],
    dims: usize,
    n_leaves: usize,
    min_weight: f64,
}

impl LevelContext<'_> {
    /// Best `(gain, border index)` for one feature, summing the squared-error
    /// reduction over every current leaf. Ties keep the lowest border.
    /// Leaves lighter than `min_weight` are fitted as zero, so they add
    /// nothing to either side of the comparison.
    fn best_threshold(&self, bins: &[u8], n_bins: usize) -> Option<(f64, usize)> {
        let dims = self.dims;
        let stride = 1 + dims;
        let mut hist = vec![0.0; self.n_leaves * n_bins * stride];
        for (i, (&l, &b)) in self.leaf.iter().zip(bins).enumerate() {
            let base = (l as usize * n_bins + b as usize) * stride;
            hist[base] += self.weights[i];
            for d in 0..dims {
                hist[base + 1 + d] += self.wr[i * dims + d];
            }
        }
        let n_thresholds = n_bins - 1;
        let mut gains = vec![0.0; n_thresholds];
        let mut left = vec![0.0; stride];
        let mut total = vec![0.0; stride];
        // suffix[b] holds the sums over bins >= b, accumulated backwards so
        // an empty right side is exactly zero
        let mut suffix = vec![0.0; (n_bins + 1) * stride];
        for l in (0..self.n_leaves).filter(|&l| self.occupied[l]) {
            let h = &hist[l * n_bins * stride..(l + 1) * n_bins * stride];
            for b in (0..n_bins).rev() {
                for s in 0..stride {
                    suffix[b * stride + s] = suffix[(b + 1) * stride + s] + h[b * stride + s];
                }
            }
            total.copy_from_slice(&suffix[..stride]);
            if total[0] <= 0.0 {
                continue;
            }
            let parent = score(&total, self.min_weight);
            left.iter_mut().for_each(|v| *v = 0.0);
            for (k, gain) in gains.iter_mut().enumerate() {
                for s in 0..stride {
                    left[s] += h[k * stride + s];
                }
                let right = &suffix[(k + 1) * stride..(k + 2) * stride];
                if left[0] > 0.0 && right[0] > 0.0 {
                    *gain += score(&left, self.min_weight) + score(right, self.min_weight) - parent;
                }
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for (k, &g) in gains.iter().enumerate() {
            if best.is_none_or(|(bg, _)| g > bg) {
                best = Some((g, k));
            }
        }
        best
    }
}

#[inline]
fn score(acc: &[f64], min_weight: f64) -> f64 {
    let w = acc[0];
    if w < min_weight {
        return 0.0;
    }
    acc[1..].iter().map(|s| s * s).sum::<f64>() / w
}
