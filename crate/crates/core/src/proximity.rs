//! Leaf co-occurrence proximities over tree ensembles.
//!
//! Forest proximity counts the trees in which two records share a leaf,
//! divided by the tree count. Boosted proximity weights each tree by its
//! importance (the normalized magnitude of the training-error drop it
//! produced) and keeps the same `1/N` prefactor, so `P(i, i) = 1/N`. Both
//! sums run over trees in ascending order and divide by `N` last.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbdt::GbdtModel;

/// Leaf index of every record in every tree, row-major (record x tree).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafMatrix {
    n_rows: usize,
    n_trees: usize,
    leaves: Vec<u32>,
}

impl LeafMatrix {
    pub fn new(n_rows: usize, n_trees: usize, leaves: Vec<u32>) -> Self {
        assert_eq!(leaves.len(), n_rows * n_trees, "leaf matrix shape");
        LeafMatrix {
            n_rows,
            n_trees,
            leaves,
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let n_trees = rows.first().map_or(0, Vec::len);
        LeafMatrix::new(rows.len(), n_trees, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn get(&self, row: usize, tree: usize) -> u32 {
        self.leaves[row * self.n_trees + tree]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.leaves[row * self.n_trees..(row + 1) * self.n_trees]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityKind {
    Boosted,
    Forest,
}

/// Normalized per-tree importances from an error trace `E(0..=N)`:
/// `|E(t-1) - E(t)| / sum_s |E(s-1) - E(s)|`, uniform when nothing moved.
pub fn tree_importances(error_trace: &[f64]) -> Result<Vec<f64>> {
    if error_trace.len() < 2 {
        return Err(Error::TraceTooShort(error_trace.len()));
    }
    let diffs: Vec<f64> = error_trace.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let total: f64 = diffs.iter().sum();
    let n = diffs.len();
    if total > 0.0 && total.is_finite() {
        Ok(diffs.into_iter().map(|d| d / total).collect())
    } else {
        Ok(vec![1.0 / n as f64; n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityIndex {
    pub kind: ProximityKind,
    pub leaves: LeafMatrix,
    pub importances: Vec<f64>,
    pub ids: Vec<String>,
}

/// Neighbors of one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub neighbors: Vec<(usize, f64)>,
    /// Set when `k` reached or exceeded the candidate count, i.e. every
    /// candidate was returned.
    pub short: bool,
}

impl ProximityIndex {
    pub fn boosted(leaves: LeafMatrix, error_trace: &[f64], ids: Vec<String>) -> Result<Self> {
        let importances = tree_importances(error_trace)?;
        if importances.len() != leaves.n_trees() {
            return Err(Error::InvalidArgument(format!(
                "{} importances for {} trees",
                importances.len(),
                leaves.n_trees()
            )));
        }
        Self::checked(ProximityKind::Boosted, leaves, importances, ids)
    }

    pub fn forest(leaves: LeafMatrix, ids: Vec<String>) -> Result<Self> {
        let n = leaves.n_trees();
        if n == 0 {
            return Err(Error::InvalidArgument("forest has no trees".into()));
        }
        Self::checked(ProximityKind::Forest, leaves, vec![1.0 / n as f64; n], ids)
    }

    fn checked(kind: ProximityKind, leaves: LeafMatrix, importances: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != leaves.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} leaf rows",
                ids.len(),
                leaves.n_rows()
            )));
        }
        Ok(ProximityIndex {
            kind,
            leaves,
            importances,
            ids,
        })
    }

    /// Index over `data` using the model's leaves and error trace.
    pub fn from_gbdt(model: &GbdtModel, data: &Dataset) -> Result<Self> {
        let leaves = model.apply_leaves(data)?;
        Self::boosted(leaves, &model.error_trace, data.ids())
    }

    pub fn len(&self) -> usize {
        self.leaves.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.n_rows() == 0
    }

    pub fn n_trees(&self) -> usize {
        self.leaves.n_trees()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn weighted_unchecked(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.leaves.row(i), self.leaves.row(j));
        let mut sum = 0.0;
        for t in 0..a.len() {
            if a[t] == b[t] {
                sum += self.importances[t];
            }
        }
        sum / a.len() as f64
    }

    #[inline]
    fn count_unchecked(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.leaves.row(i), self.leaves.row(j));
        let shared = a.iter().zip(b).filter(|(x, y)| x == y).count();
        shared as f64 / a.len() as f64
    }

    /// Proximity under the formula matching this index's kind.
    pub fn proximity(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.score_unchecked(i, j))
    }

    #[inline]
    fn score_unchecked(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            ProximityKind::Boosted => self.weighted_unchecked(i, j),
            ProximityKind::Forest => self.count_unchecked(i, j),
        }
    }

    /// Symmetric `m x m` proximity block for the given positions, row-major.
    ///
    /// Members are bucketed by leaf tree by tree, so only co-located pairs
    /// are touched. Per pair, shared-leaf terms are still added in ascending
    /// tree order, which keeps the result bit-identical to [`Self::proximity`].
    pub fn pairwise_among(&self, positions: &[usize]) -> Result<Vec<f64>> {
        for &p in positions {
            self.check(p)?;
        }
        let m = positions.len();
        let n_trees = self.n_trees();
        let mut out = vec![0.0; m * m];
        let mut by_leaf: Vec<(u32, usize)> = Vec::with_capacity(m);
        for t in 0..n_trees {
            let w = match self.kind {
                ProximityKind::Boosted => self.importances[t],
                ProximityKind::Forest => 1.0,
            };
            by_leaf.clear();
            by_leaf.extend(positions.iter().enumerate().map(|(a, &p)| (self.leaves.get(p, t), a)));
            by_leaf.sort_unstable();
            for bucket in by_leaf.chunk_by(|x, y| x.0 == y.0) {
                for (i, &(_, a)) in bucket.iter().enumerate() {
                    for &(_, b) in &bucket[i + 1..] {
                        out[a.min(b) * m + a.max(b)] += w;
                    }
                }
            }
        }
        for a in 0..m {
            out[a * m + a] = self.score_unchecked(positions[a], positions[a]);
            for b in a + 1..m {
                let s = out[a * m + b] / n_trees as f64;
                out[a * m + b] = s;
                out[b * m + a] = s;
            }
        }
        Ok(out)
    }

    /// Full `n x n` matrix.
    pub fn pairwise_matrix(&self) -> Vec<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.pairwise_among(&all).expect("positions in range")
    }

    /// Top-`k` candidates by proximity to `query`, ties broken by ascending
    /// record id. The query itself is never returned.
    pub fn knn_query(&self, query: usize, k: usize, candidates: &[usize]) -> Result<KnnResult> {
        self.check(query)?;
        let scored = candidates
            .iter()
            .filter(|&&c| c != query)
            .map(|&c| {
                self.check(c)?;
                Ok((c, self.score_unchecked(query, c)))
            })
            .collect::<Result<Vec<_>>>()?;
        select_top_k(scored, k, &self.ids)
    }
}

/// Sorts `(position, score)` pairs by score descending then id ascending and
/// keeps the first `k`.
pub fn select_top_k(mut scored: Vec<(usize, f64)>, k: usize, ids: &[String]) -> Result<KnnResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if scored.is_empty() {
        return Err(Error::InvalidArgument("no candidates to rank".into()));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[a.0].cmp(&ids[b.0]))
    });
    let short = k >= scored.len();
    scored.truncate(k);
    Ok(KnnResult {
        neighbors: scored,
        short,
    })
}

/// Boosted proximity `(1/N) sum_t importance_t [v_t(i) = v_t(j)]`.
pub fn gbm_proximity(index: &ProximityIndex, i: usize, j: usize) -> Result<f64> {
    index.check(i)?;
    index.check(j)?;
    Ok(index.weighted_unchecked(i, j))
}

/// Forest proximity `(1/N) sum_t [v_t(i) = v_t(j)]`.
pub fn rf_proximity(index: &ProximityIndex, i: usize, j: usize) -> Result<f64> {
    index.check(i)?;
    index.check(j)?;
    Ok(index.count_unchecked(i, j))
}

/// Writes `query_id,neighbor_id,proximity,rank` for the top-`k` neighbors of
/// every record among all other records.
pub fn write_neighbor_table(path: &Path, index: &ProximityIndex, k: usize, provenance: Option<&str>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    if let Some(p) = provenance {
        writeln!(file, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["query_id", "neighbor_id", "proximity", "rank"])?;
    let all: Vec<usize> = (0..index.len()).collect();
    for q in 0..index.len() {
        if index.len() < 2 {
            break;
        }
        let res = index.knn_query(q, k, &all)?;
        for (rank, (pos, p)) in res.neighbors.iter().enumerate() {
            w.write_record([
                index.ids[q].as_str(),
                index.ids[*pos].as_str(),
                &p.to_string(),
                &(rank + 1).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
