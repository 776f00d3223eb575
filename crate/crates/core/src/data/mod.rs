//! Instrument schema, dataset container and the preprocessing steps that run
//! before any model sees the data: validation, splitting, target
//! winsorization and trade-recency sample weights.

mod io;

pub use io::{read_dataset, write_dataset, DATASET_FILE, SCHEMA_FILE};

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Token substituted for absent categorical values.
pub const MISSING_TOKEN: &str = "__MISSING__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

/// Ordered feature list plus target names. Feature positions are the column
/// indices used by every model in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub target_names: Vec<String>,
    #[serde(default)]
    pub target_units: Vec<String>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, target_names: Vec<String>) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            target_names,
            target_units: Vec::new(),
        };
        schema.check()?;
        Ok(schema)
    }

    /// Structural invariants: unique names, at least one feature, targets
    /// disjoint from features.
    pub fn check(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidArgument("schema has no features".into()));
        }
        if self.target_names.is_empty() {
            return Err(Error::InvalidArgument("schema has no targets".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate feature name '{}'", f.name)));
            }
        }
        for t in &self.target_names {
            if seen.contains(t.as_str()) {
                return Err(Error::InvalidArgument(format!("target '{t}' is also a feature")));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_names.iter().position(|t| t == name)
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::Categorical)
            .map(|(i, _)| i)
            .collect()
    }

    /// Hex SHA-256 over names, kinds and targets. Units do not participate.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for f in &self.features {
            let kind = match f.kind {
                FeatureKind::Numerical => "n",
                FeatureKind::Categorical => "c",
            };
            hasher.update(f.name.as_bytes());
            hasher.update(b":");
            hasher.update(kind.as_bytes());
            hasher.update(b";");
        }
        hasher.update(b"#");
        for t in &self.target_names {
            hasher.update(t.as_bytes());
            hasher.update(b";");
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

impl FeatureValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(v) => Some(*v),
            FeatureValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Cat(s) => Some(s),
            FeatureValue::Num(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Num(v) => write!(f, "{v}"),
            FeatureValue::Cat(s) => f.write_str(s),
        }
    }
}

/// One instrument. Targets are ordered as in the schema (OAS in bp, yield in
/// percent for the bundled generator); `dxs` is duration times OAS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondRecord {
    pub id: String,
    pub features: Vec<FeatureValue>,
    pub targets: Vec<f64>,
    pub duration: f64,
    pub dxs: f64,
    pub last_trade_offset_days: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<BondRecord>,
    pub sample_weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<BondRecord>) -> Self {
        Dataset {
            schema,
            records,
            sample_weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.sample_weights = Some(weights);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sample weights, defaulting to all ones.
    pub fn weights(&self) -> Vec<f64> {
        match &self.sample_weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.records.len()],
        }
    }

    pub fn target_column(&self, dim: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.targets[dim]).collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.targets.clone()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// New dataset with the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            sample_weights: self
                .sample_weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Fails with the first violation reported by [`validate_dataset`].
    pub fn ensure_valid(&self) -> Result<()> {
        match validate_dataset(self).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidArgument(v.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record_id: Option<String>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.record_id, &self.field) {
            (Some(id), Some(field)) => write!(f, "record '{id}', field '{field}': {}", self.message),
            (Some(id), None) => write!(f, "record '{id}': {}", self.message),
            (None, Some(field)) => write!(f, "field '{field}': {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

/// Report-style validation. An empty list means the dataset is usable.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let schema = &dataset.schema;
    if let Err(e) = schema.check() {
        out.push(Violation {
            record_id: None,
            field: None,
            message: e.to_string(),
        });
    }
    if let Some(w) = &dataset.sample_weights {
        if w.len() != dataset.records.len() {
            out.push(Violation {
                record_id: None,
                field: Some("sample_weights".into()),
                message: format!("{} weights for {} records", w.len(), dataset.records.len()),
            });
        } else {
            for (r, &wi) in dataset.records.iter().zip(w) {
                if !(wi > 0.0 && wi.is_finite()) {
                    out.push(Violation {
                        record_id: Some(r.id.clone()),
                        field: Some("sample_weight".into()),
                        message: format!("weight {wi} is not strictly positive"),
                    });
                }
            }
        }
    }
    let oas_dim = schema.target_index("oas");
    for r in &dataset.records {
        let viol = |field: &str, message: String| Violation {
            record_id: Some(r.id.clone()),
            field: Some(field.to_string()),
            message,
        };
        if r.features.len() != schema.n_features() {
            out.push(viol(
                "features",
                format!(
                    "{} values for {} schema features",
                    r.features.len(),
                    schema.n_features()
                ),
            ));
            continue;
        }
        for (spec, value) in schema.features.iter().zip(&r.features) {
            match (spec.kind, value) {
                (FeatureKind::Numerical, FeatureValue::Num(v)) if !v.is_finite() => {
                    out.push(viol(&spec.name, format!("non-finite value {v}")))
                }
                (FeatureKind::Numerical, FeatureValue::Cat(_)) => {
                    out.push(viol(&spec.name, "expected a numerical value".into()))
                }
                (FeatureKind::Categorical, FeatureValue::Num(_)) => {
                    out.push(viol(&spec.name, "expected a categorical token".into()))
                }
                _ => {}
            }
        }
        if r.targets.len() != schema.n_targets() {
            out.push(viol(
                "targets",
                format!("{} targets for {} schema targets", r.targets.len(), schema.n_targets()),
            ));
            continue;
        }
        for (name, t) in schema.target_names.iter().zip(&r.targets) {
            if !t.is_finite() {
                out.push(viol(name, format!("non-finite target {t}")));
            }
        }
        if let Some(d) = oas_dim {
            let expected = r.duration * r.targets[d];
            let scale = expected.abs().max(r.dxs.abs()).max(1e-300);
            if (r.dxs - expected).abs() > 1e-9 * scale && (r.dxs - expected).abs() > 1e-12 {
                out.push(viol("dxs", format!("dxs {} != duration x oas {}", r.dxs, expected)));
            }
        }
    }
    out
}

/// Disjoint train/valid/test positions into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Seeded shuffle followed by floor allocation of the valid and test folds;
/// the rounding remainder goes to train.
pub fn split_dataset(dataset: &Dataset, seed: u64, fractions: (f64, f64, f64)) -> Result<SplitIndices> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(Error::TooFewRecords);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0x5B17));
    // the epsilon keeps 100 * 0.29 from flooring to 28
    let n_valid = ((n as f64) * fv + 1e-9).floor() as usize;
    let n_test = ((n as f64) * fs + 1e-9).floor() as usize;
    let n_train = n - n_valid - n_test;
    let train = order[..n_train].to_vec();
    let valid = order[n_train..n_train + n_valid].to_vec();
    let test = order[n_train + n_valid..].to_vec();
    Ok(SplitIndices { train, valid, test })
}

/// Percentile of an ascending sample by linear interpolation between order
/// statistics (position `p/100 * (n-1)`).
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Clips every target dimension to its empirical `[lower_pct, upper_pct]`
/// percentile band. Features are left alone; `dxs` is recomputed from the
/// clipped OAS when the schema has an `oas` target.
pub fn winsorize_targets(dataset: &Dataset, lower_pct: f64, upper_pct: f64) -> Result<Dataset> {
    if !(0.0..100.0).contains(&lower_pct) || !(upper_pct > lower_pct && upper_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "winsorization band ({lower_pct}, {upper_pct}) must satisfy 0 <= lower < upper <= 100"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = dataset.clone();
    for d in 0..dataset.schema.n_targets() {
        let mut col = dataset.target_column(d);
        col.sort_by(f64::total_cmp);
        let lo = percentile_sorted(&col, lower_pct);
        let hi = percentile_sorted(&col, upper_pct);
        for r in &mut out.records {
            r.targets[d] = r.targets[d].clamp(lo, hi);
        }
    }
    if let Some(oas) = dataset.schema.target_index("oas") {
        for r in &mut out.records {
            r.dxs = r.duration * r.targets[oas];
        }
    }
    Ok(out)
}

/// Linear recency weights: `max(floor, 1 - offset / window)`; records that
/// never traded inside the window get the floor.
pub fn compute_sample_weights(dataset: &Dataset, window_days: u32, floor: f64) -> Result<Vec<f64>> {
    if window_days == 0 {
        return Err(Error::InvalidArgument("window_days must be positive".into()));
    }
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::InvalidArgument(format!("weight floor {floor} outside (0, 1]")));
    }
    Ok(dataset
        .records
        .iter()
        .map(|r| recency_weight(r.last_trade_offset_days, window_days, floor))
        .collect())
}

pub fn recency_weight(offset: Option<u32>, window_days: u32, floor: f64) -> f64 {
    match offset {
        None => floor,
        Some(days) => (1.0 - days as f64 / window_days as f64).max(floor),
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn valid_dataset_has_empty_report() {
        assert!(validate_dataset(&dataset(3)).is_empty());
    }

    #[test]
    fn nan_coupon_is_reported() {
        let mut ds = dataset(3);
        ds.records[1].features[1] = FeatureValue::Num(f64::NAN);
        let report = validate_dataset(&ds);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].record_id.as_deref(), Some("B0001"));
        assert_eq!(report[0].field.as_deref(), Some("coupon"));
    }

    #[test]
    fn weight_length_mismatch_is_structural() {
        let ds = dataset(3).with_weights(vec![1.0, 1.0]);
        let report = validate_dataset(&ds);
        assert_eq!(report.len(), 1);
        assert!(report[0].record_id.is_none());
    }

    #[test]
    fn nonpositive_weight_is_reported() {
        let ds = dataset(3).with_weights(vec![1.0, 0.0, 1.0]);
        assert_eq!(validate_dataset(&ds).len(), 1);
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let s = split_dataset(&dataset(100), 7, (0.64, 0.16, 0.20)).unwrap();
        assert_eq!(s.sizes(), (64, 16, 20));
        let again = split_dataset(&dataset(100), 7, (0.64, 0.16, 0.20)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn split_remainder_goes_to_train() {
        let s = split_dataset(&dataset(10), 1, (0.5, 0.25, 0.25)).unwrap();
        assert_eq!(s.sizes(), (6, 2, 2));
    }

    #[test]
    fn split_rejects_tiny_dataset() {
        assert!(matches!(
            split_dataset(&dataset(2), 1, (0.6, 0.2, 0.2)),
            Err(Error::TooFewRecords)
        ));
        assert!(split_dataset(&dataset(10), 1, (0.6, 0.2, 0.3)).is_err());
    }

    #[test]
    fn winsorize_matches_brute_force_percentile() {
        let mut ds = dataset(5);
        for (r, y) in ds.records.iter_mut().zip([1.0, 2.0, 3.0, 4.0, 100.0]) {
            r.targets[1] = y;
        }
        let w = winsorize_targets(&ds, 0.0, 80.0).unwrap();
        // brute force: rank position 0.8 * 4 = 3.2 between 4 and 100
        let expected = 4.0 + (100.0 - 4.0) * 0.2;
        let got: Vec<f64> = w.target_column(1);
        assert_eq!(&got[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert!((got[4] - expected).abs() < 1e-12);
        // input untouched
        assert_eq!(ds.records[4].targets[1], 100.0);
    }

    #[test]
    fn winsorize_full_band_is_identity() {
        let ds = dataset(7);
        assert_eq!(winsorize_targets(&ds, 0.0, 100.0).unwrap(), ds);
    }

    #[test]
    fn winsorize_inside_band_is_identity() {
        let ds = dataset(101);
        let w = winsorize_targets(&ds, 0.0, 100.0).unwrap();
        assert_eq!(w.records, ds.records);
        assert!(winsorize_targets(&Dataset::new(schema(), vec![]), 1.0, 99.0).is_err());
        assert!(winsorize_targets(&ds, 50.0, 50.0).is_err());
    }

    #[test]
    fn winsorize_keeps_dxs_consistent() {
        let mut ds = dataset(20);
        ds.records[3].targets[0] = 1e6;
        ds.records[3].dxs = ds.records[3].duration * 1e6;
        let w = winsorize_targets(&ds, 5.0, 95.0).unwrap();
        assert!(validate_dataset(&w).is_empty());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(recency_weight(Some(0), 183, 0.1), 1.0);
        assert_eq!(recency_weight(Some(183), 183, 0.1), 0.1);
        assert_eq!(recency_weight(Some(400), 183, 0.1), 0.1);
        assert!((recency_weight(Some(91), 182, 0.1) - 0.5).abs() < 1e-15);
        assert_eq!(recency_weight(None, 183, 0.1), 0.1);
        assert!(compute_sample_weights(&dataset(2), 0, 0.1).is_err());
        assert!(compute_sample_weights(&dataset(2), 10, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 3usize..300, seed in any::<u64>()) {
            let s = split_dataset(&dataset(n), seed, (0.64, 0.16, 0.20)).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn weights_in_band(offset in proptest::option::of(0u32..1000), window in 1u32..400, floor in 0.01f64..1.0) {
            let w = recency_weight(offset, window, floor);
            prop_assert!(w >= floor && w <= 1.0);
            prop_assert_eq!(w == 1.0, offset == Some(0) || floor == 1.0);
        }

        #[test]
        fn weights_monotone_in_staleness(a in 0u32..500, b in 0u32..500) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(recency_weight(Some(lo), 183, 0.1) >= recency_weight(Some(hi), 183, 0.1));
        }

        // Linear-interpolated bounds are a fixed point whenever the band
        // positions land on order statistics, e.g. 1/99 with n = 101.
        #[test]
        fn winsorize_idempotent_on_order_statistics(ys in proptest::collection::vec(-1e3f64..1e3, 101)) {
            let mut ds = dataset(101);
            for (r, y) in ds.records.iter_mut().zip(&ys) {
                r.targets[1] = *y;
            }
            let once = winsorize_targets(&ds, 1.0, 99.0).unwrap();
            let twice = winsorize_targets(&once, 1.0, 99.0).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn winsorize_second_pass_stays_in_first_band(ys in proptest::collection::vec(-1e3f64..1e3, 3..60)) {
            let mut ds = dataset(ys.len());
            for (r, y) in ds.records.iter_mut().zip(&ys) {
                r.targets[1] = *y;
            }
            let once = winsorize_targets(&ds, 10.0, 90.0).unwrap();
            let twice = winsorize_targets(&once, 10.0, 90.0).unwrap();
            let c1 = once.target_column(1);
            let (lo, hi) = c1.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            prop_assert!(twice.target_column(1).iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
