use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_for, EncodedFold};
use crate::data::Dataset;
use crate::encoding::{bin_of, CategoricalEncoder, FeatureMatrix, NumericBorders};
use crate::error::{Error, Result};
use crate::persist::{ModelHeader, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        cover: f64,
        leaf_id: u32,
    },
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_leaves: u32,
}

impl DecisionTree {
    fn leaf(&self, matrix: &FeatureMatrix, row: usize) -> (f64, u32) {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if matrix.get(row, feature) > threshold {
                        right
                    } else {
                        left
                    }
                }
                Node::Leaf { value, leaf_id, .. } => return (value, leaf_id),
            }
        }
    }

    pub fn predict_row(&self, matrix: &FeatureMatrix, row: usize) -> f64 {
        self.leaf(matrix, row).0
    }

    pub fn leaf_id(&self, matrix: &FeatureMatrix, row: usize) -> u32 {
        self.leaf(matrix, row).1
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Minimum number of training rows on each side of a split.
    pub min_samples_leaf: usize,
    pub max_borders: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            max_borders: 254,
        }
    }
}

impl TreeConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
        }
        if !(1..=254).contains(&self.max_borders) {
            return Err(Error::InvalidArgument(format!(
                "max_borders {} outside [1, 254]",
                self.max_borders
            )));
        }
        Ok(())
    }
}

/// Binned view of a training matrix shared by every tree grown on it.
pub(crate) struct BinnedMatrix {
    pub borders: NumericBorders,
    pub bins: Vec<Vec<u8>>,
    pub usable: Vec<usize>,
}

impl BinnedMatrix {
    pub fn new(matrix: &FeatureMatrix, max_borders: usize) -> Result<Self> {
        let borders = NumericBorders::fit(matrix, max_borders)?;
        let bins = (0..matrix.n_cols())
            .map(|c| {
                let b = &borders.per_feature[c];
                matrix.column(c).iter().map(|&v| bin_of(b, v) as u8).collect()
            })
            .collect();
        let usable = (0..matrix.n_cols())
            .filter(|&c| !borders.per_feature[c].is_empty())
            .collect();
        Ok(BinnedMatrix { borders, bins, usable })
    }
}

pub(crate) struct Grower<'a> {
    pub binned: &'a BinnedMatrix,
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub config: &'a TreeConfig,
    /// Fraction of usable features drawn at every node, with its RNG.
    pub feature_draw: Option<(f64, &'a mut ChaCha8Rng)>,
}

impl Grower<'_> {
    /// Grows a tree over `rows`, which may repeat indices (bootstrap).
    pub fn grow(mut self, rows: Vec<usize>) -> DecisionTree {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_leaves: 0,
        };
        self.node(rows, 0, &mut tree);
        tree
    }

    fn node(&mut self, rows: Vec<usize>, depth: usize, tree: &mut DecisionTree) -> usize {
        let at = tree.nodes.len();
        let (sw, swy) = rows
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + self.w[i], b + self.w[i] * self.y[i]));
        let constant = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        let value = if constant { self.y[rows[0]] } else { swy / sw };
        let can_split = !constant
            && self.config.max_depth.is_none_or(|d| depth < d)
            && rows.len() >= 2 * self.config.min_samples_leaf;
        let split = if can_split { self.best_split(&rows, value) } else { None };
        let Some((feature, k)) = split else {
            tree.nodes.push(Node::Leaf {
                value,
                cover: sw,
                leaf_id: tree.n_leaves,
            });
            tree.n_leaves += 1;
            return at;
        };
        tree.nodes.push(Node::Leaf {
            value: 0.0,
            cover: 0.0,
            leaf_id: 0,
        });
        let col = &self.binned.bins[feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| usize::from(col[i]) <= k);
        let left = self.node(left_rows, depth + 1, tree);
        let right = self.node(right_rows, depth + 1, tree);
        tree.nodes[at] = Node::Split {
            feature,
            threshold: self.binned.borders.per_feature[feature][k],
            left,
            right,
        };
        at
    }

    fn candidates(&mut self) -> Vec<usize> {
        let usable = &self.binned.usable;
        match self.feature_draw.as_mut() {
            Some((fraction, rng)) if !usable.is_empty() => {
                let m = ((*fraction * usable.len() as f64).round() as usize).clamp(1, usable.len());
                if m == usable.len() {
                    return usable.clone();
                }
                let mut picked: Vec<usize> = sample(*rng, usable.len(), m).into_iter().map(|i| usable[i]).collect();
                picked.sort_unstable();
                picked
            }
            _ => usable.clone(),
        }
    }

    /// Best `(feature, border index)` by weighted variance reduction, with
    /// residuals centered on the node mean.
    fn best_split(&mut self, rows: &[usize], mean: f64) -> Option<(usize, usize)> {
        let min_leaf = self.config.min_samples_leaf;
        let mut best: Option<(f64, usize, usize)> = None;
        for f in self.candidates() {
            let n_bins = self.binned.borders.per_feature[f].len() + 1;
            let col = &self.binned.bins[f];
            let mut cnt = vec![0usize; n_bins];
            let mut hw = vec![0.0; n_bins];
            let mut hr = vec![0.0; n_bins];
            for &i in rows {
                let b = col[i] as usize;
                cnt[b] += 1;
                hw[b] += self.w[i];
                hr[b] += self.w[i] * (self.y[i] - mean);
            }
            let (tc, tw, tr): (usize, f64, f64) = (cnt.iter().sum(), hw.iter().sum(), hr.iter().sum());
            let parent = tr * tr / tw;
            let (mut lc, mut lw, mut lr) = (0usize, 0.0, 0.0);
            for k in 0..n_bins - 1 {
                lc += cnt[k];
                lw += hw[k];
                lr += hr[k];
                let (rc, rw, rr) = (tc - lc, tw - lw, tr - lr);
                if lc < min_leaf || rc < min_leaf || lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let gain = lr * lr / lw + rr * rr / rw - parent;
                // zero-gain splits are allowed on impure nodes so XOR-like
                // interactions stay reachable
                if gain >= 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, k));
                }
            }
        }
        best.map(|(_, f, k)| (f, k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub header: ModelHeader,
    pub target_dim: usize,
    pub config: TreeConfig,
    pub encoder: CategoricalEncoder,
    pub tree: DecisionTree,
}

impl DecisionTreeModel {
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Vec<f64> {
        (0..matrix.n_rows()).map(|r| self.tree.predict_row(matrix, r)).collect()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let m = encode_for(&self.encoder, &self.header.schema_fingerprint, data)?;
        Ok(self.predict_matrix(&m))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.header.check(ModelKind::DecisionTree)?;
        Ok(m)
    }
}

/// Greedy CART on one target dimension.
pub fn train_decision_tree(fold: &EncodedFold, target_dim: usize, config: &TreeConfig) -> Result<DecisionTreeModel> {
    config.validate()?;
    let y = fold.target(target_dim)?;
    let w = fold.data.weights();
    let binned = BinnedMatrix::new(&fold.matrix, config.max_borders)?;
    let tree = Grower {
        binned: &binned,
        y: &y,
        w: &w,
        config,
        feature_draw: None,
    }
    .grow((0..y.len()).collect());
    Ok(DecisionTreeModel {
        header: ModelHeader::new(ModelKind::DecisionTree, fold.data.schema.fingerprint()),
        target_dim,
        config: config.clone(),
        encoder: fold.encoder.clone(),
        tree,
    })
}
