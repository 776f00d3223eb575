//! Path-dependent TreeSHAP attributions for the boosted ensemble.
//!
//! An oblivious tree of depth `d` is walked as the full binary tree it
//! implies: the node at level `l` with leaf-bit prefix `p` splits on
//! `splits[l]`, and its cover is the summed cover of the leaves under it.
//! Conditional expectations weight the two children by their cover share
//! (one half each when the parent cover is zero).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoding::FeatureMatrix;
use crate::error::{Error, Result};
use crate::gbdt::{GbdtModel, ObliviousTree};

/// `phi[record][feature][dim]`.
pub type Phi = Vec<Vec<Vec<f64>>>;

/// Attributions in raw target units, plus the per-dimension
/// base value they are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub record_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub phi: Phi,
    pub base: Vec<f64>,
}

/// Node covers of an oblivious tree, `covers[level][prefix]`.
fn node_covers(tree: &ObliviousTree) -> Vec<Vec<f64>> {
    let depth = tree.depth();
    let mut covers = vec![Vec::new(); depth + 1];
    covers[depth] = tree.leaf_weights.clone();
    for level in (0..depth).rev() {
        let below = &covers[level + 1];
        covers[level] = (0..1usize << level)
            .map(|p| below[p] + below[p | (1 << level)])
            .collect();
    }
    covers
}

/// Cover share of the child `prefix | bit << level` under node `(level, prefix)`.
fn child_share(covers: &[Vec<f64>], level: usize, prefix: usize, bit: usize) -> f64 {
    let parent = covers[level][prefix];
    if parent > 0.0 {
        covers[level + 1][prefix | (bit << level)] / parent
    } else {
        0.5
    }
}

/// Cover-weighted mean leaf value, in the same order the attribution uses.
fn expected_value(tree: &ObliviousTree, covers: &[Vec<f64>], level: usize, prefix: usize, out: &mut [f64]) {
    if level == tree.depth() {
        for (o, v) in out.iter_mut().zip(&tree.leaf_values[prefix]) {
            *o += v;
        }
        return;
    }
    for bit in 0..2 {
        let share = child_share(covers, level, prefix, bit);
        let mut sub = vec![0.0; out.len()];
        expected_value(tree, covers, level + 1, prefix | (bit << level), &mut sub);
        for (o, s) in out.iter_mut().zip(sub) {
            *o += share * s;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement { zero, one, .. } = path[index];
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (depth + 1) as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].weight = path[i].weight * (depth + 1) as f64 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement { zero, one, .. } = path[index];
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[depth].weight;
        for i in (0..depth).rev() {
            let tmp = next / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64;
        }
    } else if zero != 0.0 {
        for i in (0..depth).rev() {
            total += path[i].weight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

/// In an oblivious tree the hot path is fixed by the record's leaf index,
/// so attributions are computed per leaf rather than per record.
struct TreeWalk<'a> {
    tree: &'a ObliviousTree,
    covers: &'a [Vec<f64>],
    leaf: usize,
}

impl TreeWalk<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        level: usize,
        prefix: usize,
        mut path: Vec<PathElement>,
        zero: f64,
        one: f64,
        feature: Option<usize>,
        phi: &mut [Vec<f64>],
    ) {
        extend(&mut path, zero, one, feature);
        if level == self.tree.depth() {
            let value = &self.tree.leaf_values[prefix];
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                let f = el.feature.expect("only the root element has no feature");
                for (p, v) in phi[f].iter_mut().zip(value) {
                    *p += w * (el.one - el.zero) * v;
                }
            }
            return;
        }
        let split = self.tree.splits[level];
        let hot = (self.leaf >> level) & 1;
        let (mut in_zero, mut in_one) = (1.0, 1.0);
        if let Some(k) = path.iter().position(|e| e.feature == Some(split.feature)) {
            in_zero = path[k].zero;
            in_one = path[k].one;
            unwind(&mut path, k);
        }
        for bit in [hot, 1 - hot] {
            let z = child_share(self.covers, level, prefix, bit) * in_zero;
            let o = if bit == hot { in_one } else { 0.0 };
            // such a branch carries zero weight and would break a later unwind
            if z == 0.0 && o == 0.0 {
                continue;
            }
            self.recurse(
                level + 1,
                prefix | (bit << level),
                path.clone(),
                z,
                o,
                Some(split.feature),
                phi,
            );
        }
    }
}

/// Attributions in standardized units for every row of `matrix`, together
/// with the standardized base value.
pub fn tree_shap_standardized(model: &GbdtModel, matrix: &FeatureMatrix) -> Result<(Phi, Vec<f64>)> {
    if model.trees.iter().any(|t| !t.has_covers()) {
        return Err(Error::MissingCovers);
    }
    let dims = model.n_targets();
    let covers: Vec<Vec<Vec<f64>>> = model.trees.iter().map(node_covers).collect();
    let mut base = model.base_prediction.clone();
    for (tree, c) in model.trees.iter().zip(&covers) {
        let mut e = vec![0.0; dims];
        expected_value(tree, c, 0, 0, &mut e);
        for (b, v) in base.iter_mut().zip(e) {
            *b += v;
        }
    }
    let n_features = matrix.n_cols();
    let mut phi = vec![vec![vec![0.0; dims]; n_features]; matrix.n_rows()];
    for (tree, c) in model.trees.iter().zip(&covers) {
        let leaves: Vec<usize> = (0..matrix.n_rows()).map(|r| tree.leaf_index(matrix, r)).collect();
        let mut distinct = leaves.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let per_leaf: BTreeMap<usize, Vec<Vec<f64>>> = distinct
            .par_iter()
            .map(|&leaf| {
                let mut contrib = vec![vec![0.0; dims]; n_features];
                let walk = TreeWalk { tree, covers: c, leaf };
                walk.recurse(0, 0, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None, &mut contrib);
                (leaf, contrib)
            })
            .collect();
        phi.par_iter_mut().zip(&leaves).for_each(|(rec, leaf)| {
            for (acc, add) in rec.iter_mut().zip(&per_leaf[leaf]) {
                for (a, v) in acc.iter_mut().zip(add) {
                    *a += v;
                }
            }
        });
    }
    Ok((phi, base))
}

/// Per-record Shapley attributions in raw target units.
pub fn tree_shap(model: &GbdtModel, data: &Dataset) -> Result<Attribution> {
    let matrix = model.encode(data)?;
    let (mut phi, base_std) = tree_shap_standardized(model, &matrix)?;
    let st = &model.standardization;
    for record in &mut phi {
        for feature in record.iter_mut() {
            for (d, v) in feature.iter_mut().enumerate() {
                *v *= st.std[d];
            }
        }
    }
    Ok(Attribution {
        record_ids: data.ids(),
        feature_names: data.schema.features.iter().map(|f| f.name.clone()).collect(),
        target_names: data.schema.target_names.clone(),
        phi,
        base: st.destandardize(&base_std),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImportance {
    pub target: String,
    pub features: Vec<FeatureImportance>,
}

/// Mean `|phi|` per feature for each target, largest first, ties by name.
pub fn global_importance(attr: &Attribution) -> Result<Vec<TargetImportance>> {
    if attr.phi.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = attr.phi.len() as f64;
    Ok(attr
        .target_names
        .iter()
        .enumerate()
        .map(|(d, target)| {
            let mut features: Vec<FeatureImportance> = attr
                .feature_names
                .iter()
                .enumerate()
                .map(|(f, name)| FeatureImportance {
                    feature: name.clone(),
                    mean_abs_phi: attr.phi.iter().map(|r| r[f][d].abs()).sum::<f64>() / n,
                })
                .collect();
            features.sort_by(|a, b| {
                b.mean_abs_phi
                    .total_cmp(&a.mean_abs_phi)
                    .then_with(|| a.feature.cmp(&b.feature))
            });
            TargetImportance {
                target: target.clone(),
                features,
            }
        })
        .collect())
}

/// Long-format `record_id,feature,target_dim,phi`.
pub fn write_attributions_csv(path: &Path, attr: &Attribution, provenance: Option<&str>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    if let Some(p) = provenance {
        writeln!(file, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["record_id", "feature", "target_dim", "phi"])?;
    for (id, rec) in attr.record_ids.iter().zip(&attr.phi) {
        for (name, vals) in attr.feature_names.iter().zip(rec) {
            for (target, v) in attr.target_names.iter().zip(vals) {
                w.write_record([id.as_str(), name.as_str(), target.as_str(), &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
