//! Feature encoding shared by every learner: ordered target statistics for
//! categorical columns and quantile split borders for numerical ones.
//!
//! Ordered encoding visits the training rows in one seeded permutation and
//! encodes each row from the rows visited *before* it only:
//!
//! ```text
//! enc(i, f) = (sum_{j < i, tok(j,f) = tok(i,f)} y_j + prior * w) / (count + w)
//! ```
//!
//! so a row's own target never leaks into its encoding. Inference uses the
//! full fitted statistics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{BondRecord, Dataset, FeatureKind, FeatureSchema, FeatureValue};
use crate::error::{Error, Result};
use crate::rng;

/// Dense column-major feature matrix, one column per schema feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged columns");
        FeatureMatrix { n_rows, columns }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let columns = (0..n_cols).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        FeatureMatrix {
            n_rows: rows.len(),
            columns,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenStats {
    pub sum: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeature {
    /// Schema position of the categorical feature.
    pub index: usize,
    pub stats: BTreeMap<String, TokenStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub n_features: usize,
    pub target_dim: usize,
    pub prior: f64,
    pub prior_weight: f64,
    pub seed: u64,
    pub features: Vec<EncodedFeature>,
}

impl CategoricalEncoder {
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Encoded value for a token under the full fitted statistics.
    pub fn encode_token(&self, feature: &EncodedFeature, token: &str) -> f64 {
        let s = feature.stats.get(token).copied().unwrap_or_default();
        (s.sum + self.prior * self.prior_weight) / (s.count as f64 + self.prior_weight)
    }
}

/// Fits the encoder on `dataset` and returns it together with the
/// leakage-free training matrix (numerical columns pass through unchanged).
pub fn fit_ordered_encoding(
    dataset: &Dataset,
    target_dim: usize,
    seed: u64,
    prior_weight: f64,
) -> Result<(CategoricalEncoder, FeatureMatrix)> {
    let schema = &dataset.schema;
    if target_dim >= schema.n_targets() {
        return Err(Error::InvalidArgument(format!(
            "target dimension {target_dim} out of range"
        )));
    }
    if !(prior_weight > 0.0) {
        return Err(Error::InvalidArgument("prior_weight must be positive".into()));
    }
    let n = dataset.len();
    let target = dataset.target_column(target_dim);
    let prior = if n == 0 {
        0.0
    } else {
        target.iter().sum::<f64>() / n as f64
    };

    let mut columns = numeric_columns(schema, &dataset.records)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0xE4C0));

    let mut features = Vec::new();
    for idx in schema.categorical_indices() {
        let tokens = dataset
            .records
            .iter()
            .map(|r| cat_value(r, idx))
            .collect::<Result<Vec<_>>>()?;
        let stats = encode_in_order(&tokens, &target, &order, prior, prior_weight, &mut columns[idx]);
        features.push(EncodedFeature { index: idx, stats });
    }
    let encoder = CategoricalEncoder {
        n_features: schema.n_features(),
        target_dim,
        prior,
        prior_weight,
        seed,
        features,
    };
    Ok((encoder, FeatureMatrix::from_columns(columns)))
}

/// One sequential pass: each row is encoded from the statistics of the rows
/// before it in `order`, then folded into them.
fn encode_in_order(
    tokens: &[&str],
    target: &[f64],
    order: &[usize],
    prior: f64,
    prior_weight: f64,
    out: &mut [f64],
) -> BTreeMap<String, TokenStats> {
    let mut stats: BTreeMap<String, TokenStats> = BTreeMap::new();
    for &row in order {
        let entry = stats.entry(tokens[row].to_string()).or_default();
        out[row] = (entry.sum + prior * prior_weight) / (entry.count as f64 + prior_weight);
        entry.sum += target[row];
        entry.count += 1;
    }
    stats
}

/// Deterministic inference-time encoding with the full fitted statistics;
/// unseen tokens map to the prior.
pub fn transform(
    encoder: &CategoricalEncoder,
    schema: &FeatureSchema,
    records: &[BondRecord],
) -> Result<FeatureMatrix> {
    if schema.n_features() != encoder.n_features {
        return Err(Error::SchemaMismatch(format!(
            "encoder fitted on {} features, schema has {}",
            encoder.n_features,
            schema.n_features()
        )));
    }
    let mut columns = numeric_columns(schema, records)?;
    for feat in &encoder.features {
        let col = &mut columns[feat.index];
        for (row, r) in records.iter().enumerate() {
            col[row] = encoder.encode_token(feat, cat_value(r, feat.index)?);
        }
    }
    Ok(FeatureMatrix::from_columns(columns))
}

fn numeric_columns(schema: &FeatureSchema, records: &[BondRecord]) -> Result<Vec<Vec<f64>>> {
    let mut columns = vec![vec![0.0; records.len()]; schema.n_features()];
    for (j, spec) in schema.features.iter().enumerate() {
        if spec.kind != FeatureKind::Numerical {
            continue;
        }
        for (row, r) in records.iter().enumerate() {
            columns[j][row] = match r.features.get(j) {
                Some(FeatureValue::Num(v)) => *v,
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "record '{}' lacks numerical feature '{}'",
                        r.id, spec.name
                    )))
                }
            };
        }
    }
    Ok(columns)
}

fn cat_value(record: &BondRecord, idx: usize) -> Result<&str> {
    match record.features.get(idx) {
        Some(FeatureValue::Cat(s)) => Ok(s),
        _ => Err(Error::SchemaMismatch(format!(
            "record '{}' lacks categorical feature at position {idx}",
            record.id
        ))),
    }
}

/// Per-feature split thresholds, strictly increasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NumericBorders {
    pub per_feature: Vec<Vec<f64>>,
}

impl NumericBorders {
    pub fn fit(matrix: &FeatureMatrix, max_borders: usize) -> Result<Self> {
        let per_feature = (0..matrix.n_cols())
            .map(|c| compute_borders(matrix.column(c), max_borders))
            .collect::<Result<_>>()?;
        Ok(NumericBorders { per_feature })
    }
}

/// Quantile-midpoint thresholds. With few distinct values every gap between
/// consecutive distinct values gets its midpoint; a constant column yields
/// no borders.
pub fn compute_borders(column: &[f64], max_borders: usize) -> Result<Vec<f64>> {
    if max_borders == 0 {
        return Err(Error::InvalidArgument("max_borders must be at least 1".into()));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Ok(Vec::new());
    }
    if distinct.len() <= max_borders + 1 {
        return Ok(distinct.windows(2).filter_map(|w| midpoint(w[0], w[1])).collect());
    }
    let n = sorted.len();
    let mut borders: Vec<f64> = Vec::with_capacity(max_borders);
    for j in 1..=max_borders {
        let idx = (j * n / (max_borders + 1)).max(1);
        let below = sorted[idx - 1];
        let next = distinct.partition_point(|&v| v <= below);
        if next == distinct.len() {
            continue;
        }
        if let Some(m) = midpoint(below, distinct[next]) {
            if borders.last().is_none_or(|&last| m > last) {
                borders.push(m);
            }
        }
    }
    Ok(borders)
}

fn midpoint(a: f64, b: f64) -> Option<f64> {
    let m = a + (b - a) / 2.0;
    (m > a && m < b).then_some(m)
}

/// Bin of `value` against ascending `borders`: the number of borders strictly
/// below it, so `bin > k` iff `value > borders[k]`.
#[inline]
pub fn bin_of(borders: &[f64], value: f64) -> usize {
    borders.partition_point(|&b| b < value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use proptest::prelude::*;

    #[test]
    fn first_occurrence_gets_prior_and_second_gets_running_mean() {
        let mut ds = fixtures::dataset(2);
        for r in &mut ds.records {
            r.features[0] = FeatureValue::Cat("CA".into());
        }
        ds.records[0].targets[0] = 10.0;
        ds.records[1].targets[0] = 20.0;
        let (enc, m) = fit_ordered_encoding(&ds, 0, 3, 1.0).unwrap();
        let prior = 15.0;
        assert_eq!(enc.prior, prior);
        // one row is visited first and sees an empty history
        let col = m.column(0);
        let (first, second) = if col[0] == prior { (0, 1) } else { (1, 0) };
        assert_eq!(col[first], prior);
        let y1 = ds.records[first].targets[0];
        assert!((col[second] - (y1 + prior) / 2.0).abs() < 1e-12);
        // numeric columns pass through
        assert_eq!(m.column(1), &[0.0, 1.0]);
    }

    #[test]
    fn transform_uses_full_statistics() {
        let mut stats = BTreeMap::new();
        stats.insert("CA".to_string(), TokenStats { sum: 10.0, count: 2 });
        let enc = CategoricalEncoder {
            n_features: 2,
            target_dim: 0,
            prior: 4.0,
            prior_weight: 1.0,
            seed: 0,
            features: vec![EncodedFeature { index: 0, stats }],
        };
        let ds = fixtures::dataset(3);
        let mut recs = ds.records.clone();
        recs[0].features[0] = FeatureValue::Cat("CA".into());
        recs[1].features[0] = FeatureValue::Cat("ZZ".into());
        let m = transform(&enc, &ds.schema, &recs).unwrap();
        assert!((m.get(0, 0) - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(transform(&enc, &ds.schema, &recs).unwrap(), m);
        assert_eq!(transform(&enc, &ds.schema, &[]).unwrap().n_rows(), 0);
    }

    #[test]
    fn no_categoricals_gives_empty_encoder() {
        let ds = fixtures::dataset(4);
        let mut schema = ds.schema.clone();
        schema.features.remove(0);
        let recs = ds
            .records
            .iter()
            .map(|r| BondRecord {
                features: vec![r.features[1].clone()],
                ..r.clone()
            })
            .collect();
        let (enc, m) = fit_ordered_encoding(&Dataset::new(schema, recs), 0, 1, 1.0).unwrap();
        assert!(enc.is_empty());
        assert_eq!(m.n_cols(), 1);
    }

    #[test]
    fn border_examples() {
        assert_eq!(compute_borders(&[1.0, 2.0], 4).unwrap(), vec![1.5]);
        assert!(compute_borders(&[5.0, 5.0, 5.0], 4).unwrap().is_empty());
        assert!(compute_borders(&[1.0], 0).is_err());
    }

    #[test]
    fn quantile_borders_match_brute_force() {
        let col: Vec<f64> = (1..=1000).map(f64::from).collect();
        let b = compute_borders(&col, 3).unwrap();
        assert_eq!(b.len(), 3);
        // brute force: the q-quantile of 1..=1000 is about 1000 q
        for (border, q) in b.iter().zip([0.25, 0.5, 0.75]) {
            let brute = {
                let mut s = col.clone();
                s.sort_by(f64::total_cmp);
                s[(q * s.len() as f64) as usize - 1]
            };
            assert!((border - brute).abs() <= 1.0, "{border} vs {brute}");
        }
    }

    proptest! {
        #[test]
        fn leakage_free(
            ys in proptest::collection::vec(-50f64..50.0, 2..40),
            seed in any::<u64>(),
            bump in 1f64..100.0,
            cut in 0usize..40,
        ) {
            let n = ys.len();
            let tokens: Vec<&str> = (0..n).map(|i| ["A", "B", "C"][i % 3]).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(seed, 1));
            let cut = cut % n;
            let mut base = vec![0.0; n];
            encode_in_order(&tokens, &ys, &order, 3.0, 1.0, &mut base);
            let mut perturbed = ys.clone();
            for &row in &order[cut + 1..] {
                perturbed[row] += bump;
            }
            let mut after = vec![0.0; n];
            encode_in_order(&tokens, &perturbed, &order, 3.0, 1.0, &mut after);
            for &row in &order[..=cut] {
                prop_assert_eq!(base[row], after[row]);
            }
        }

        #[test]
        fn transform_commutes_with_permutation(seed in any::<u64>()) {
            let ds = fixtures::dataset(12);
            let (enc, _) = fit_ordered_encoding(&ds, 0, seed, 1.0).unwrap();
            let m = transform(&enc, &ds.schema, &ds.records).unwrap();
            let mut rev = ds.records.clone();
            rev.reverse();
            let mr = transform(&enc, &ds.schema, &rev).unwrap();
            for i in 0..12 {
                prop_assert_eq!(m.row(i), mr.row(11 - i));
            }
        }

        #[test]
        fn borders_strictly_between_observations(col in proptest::collection::vec(-1e3f64..1e3, 1..200), maxb in 1usize..20) {
            let b = compute_borders(&col, maxb).unwrap();
            prop_assert!(b.len() <= maxb);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
            for &t in &b {
                prop_assert!(col.iter().any(|&v| v < t) && col.iter().any(|&v| v > t));
                prop_assert!(col.iter().all(|&v| v != t));
            }
        }
    }
}
