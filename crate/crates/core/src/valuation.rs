//! Generic groups and within-group relative-value rankings.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BondRecord, FeatureSchema};
use crate::error::{Error, Result};
use crate::proximity::ProximityIndex;

pub const DAYS_PER_YEAR: f64 = 365.25;
pub const CANONICAL_K: [usize; 4] = [5, 10, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaturityBucket {
    /// `(n - 1, n]` years, `n` in 1..=10.
    Year(u8),
    Y10To15,
    Y15Plus,
}

impl MaturityBucket {
    pub fn from_days(days: f64) -> Result<Self> {
        if !(days > 0.0) {
            return Err(Error::InvalidArgument(format!("nonpositive maturity {days} days")));
        }
        let years = days / DAYS_PER_YEAR;
        Ok(if years <= 10.0 {
            MaturityBucket::Year(years.ceil().max(1.0) as u8)
        } else if years <= 15.0 {
            MaturityBucket::Y10To15
        } else {
            MaturityBucket::Y15Plus
        })
    }

    pub fn label(&self) -> String {
        match self {
            MaturityBucket::Year(n) => format!("Y{n}"),
            MaturityBucket::Y10To15 => "Y10_15".into(),
            MaturityBucket::Y15Plus => "Y15PLUS".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub state: String,
    pub bucket: MaturityBucket,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.state, self.bucket.label())
    }
}

/// Column positions needed to assign a record to its generic group.
#[derive(Debug, Clone, Copy)]
pub struct GroupColumns {
    pub state: usize,
    pub days_to_maturity: usize,
}

impl GroupColumns {
    pub fn from_schema(schema: &FeatureSchema) -> Result<Self> {
        let find = |name: &str| {
            schema
                .feature_index(name)
                .ok_or_else(|| Error::SchemaMismatch(format!("schema has no '{name}' feature")))
        };
        Ok(GroupColumns {
            state: find("state")?,
            days_to_maturity: find("days_to_maturity")?,
        })
    }
}

/// `(state, maturity bucket)` of a record, `elapsed_days` after the record's
/// reference date.
pub fn assign_generic_group(record: &BondRecord, cols: GroupColumns, elapsed_days: f64) -> Result<GroupKey> {
    let state = record
        .features
        .get(cols.state)
        .and_then(|v| v.as_cat())
        .ok_or_else(|| Error::SchemaMismatch(format!("record '{}' has no state token", record.id)))?;
    let days = record
        .features
        .get(cols.days_to_maturity)
        .and_then(|v| v.as_num())
        .ok_or_else(|| Error::SchemaMismatch(format!("record '{}' has no maturity", record.id)))?;
    Ok(GroupKey {
        state: state.to_string(),
        bucket: MaturityBucket::from_days(days - elapsed_days)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Yield,
    DxsCohort,
    SimilarityCohort,
}

impl RankMethod {
    pub const ALL: [RankMethod; 3] = [RankMethod::Yield, RankMethod::DxsCohort, RankMethod::SimilarityCohort];

    pub fn as_str(&self) -> &'static str {
        match self {
            RankMethod::Yield => "yield",
            RankMethod::DxsCohort => "dxs_cohort",
            RankMethod::SimilarityCohort => "similarity_cohort",
        }
    }

    pub fn uses_k(&self) -> bool {
        *self != RankMethod::Yield
    }
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownToken {
                kind: "ranking method",
                token: s.to_string(),
            })
    }
}

/// One quoted bond on a valuation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBond {
    pub id: String,
    /// Row of this bond in the proximity index.
    pub row: usize,
    pub yield_pct: f64,
    pub dxs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub bond_id: String,
    /// Position of the bond in the ranked group's member slice.
    pub member: usize,
    pub score: f64,
    /// Yield minus the cohort median; `None` for the plain yield ranking.
    pub rv: Option<f64>,
}

/// Best first: `entries[0]` has rank 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub method: RankMethod,
    pub k: Option<usize>,
    pub entries: Vec<RankedEntry>,
    /// A single-member group.
    pub degenerate: bool,
    /// Some cohort was the whole group minus the bond itself.
    pub short: bool,
}

impl RankedList {
    pub fn rank_of(&self, member: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.member == member).map(|p| p + 1)
    }
}

/// Median with the even-size convention of averaging the two central values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    Some(if m % 2 == 1 {
        values[m / 2]
    } else {
        (values[m / 2 - 1] + values[m / 2]) / 2.0
    })
}

fn by_score_then_id(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    // +0.0 folds negative zero into zero so equal scores tie-break by id.
    (b.score + 0.0)
        .total_cmp(&(a.score + 0.0))
        .then_with(|| a.bond_id.cmp(&b.bond_id))
}

/// Highest quoted yield first.
pub fn rank_by_yield(members: &[SnapshotBond]) -> RankedList {
    let mut entries: Vec<RankedEntry> = members
        .iter()
        .enumerate()
        .map(|(i, b)| RankedEntry {
            bond_id: b.id.clone(),
            member: i,
            score: b.yield_pct,
            rv: None,
        })
        .collect();
    entries.sort_by(by_score_then_id);
    RankedList {
        method: RankMethod::Yield,
        k: None,
        entries,
        degenerate: members.len() == 1,
        short: false,
    }
}

/// For every member, the other members ordered nearest first.
pub type NeighborOrder = Vec<Vec<usize>>;

pub fn dxs_neighbor_order(members: &[SnapshotBond]) -> NeighborOrder {
    (0..members.len())
        .map(|i| {
            let mut others: Vec<usize> = (0..members.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = (members[a].dxs - members[i].dxs).abs();
                let db = (members[b].dxs - members[i].dxs).abs();
                da.total_cmp(&db).then_with(|| members[a].id.cmp(&members[b].id))
            });
            others
        })
        .collect()
}

pub fn similarity_neighbor_order(members: &[SnapshotBond], index: &ProximityIndex) -> Result<NeighborOrder> {
    let rows: Vec<usize> = members.iter().map(|b| b.row).collect();
    let m = rows.len();
    let prox = index.pairwise_among(&rows)?;
    Ok((0..m)
        .map(|i| {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                prox[i * m + b]
                    .total_cmp(&prox[i * m + a])
                    .then_with(|| members[a].id.cmp(&members[b].id))
            });
            others
        })
        .collect())
}

/// Ranks by `yield - median(yields of the first k neighbors)`, largest first.
pub fn rank_by_cohort(
    members: &[SnapshotBond],
    order: &NeighborOrder,
    method: RankMethod,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if order.len() != members.len() {
        return Err(Error::InvalidArgument("neighbor order does not match the group".into()));
    }
    let short = members.len() >= 2 && k >= members.len() - 1;
    let mut cohort = Vec::with_capacity(k.min(members.len()));
    let mut entries: Vec<RankedEntry> = members
        .iter()
        .enumerate()
        .map(|(i, b)| {
            cohort.clear();
            cohort.extend(order[i].iter().take(k).map(|&j| members[j].yield_pct));
            let rv = median(&mut cohort).map_or(0.0, |med| b.yield_pct - med);
            RankedEntry {
                bond_id: b.id.clone(),
                member: i,
                score: rv,
                rv: Some(rv),
            }
        })
        .collect();
    entries.sort_by(by_score_then_id);
    Ok(RankedList {
        method,
        k: Some(k),
        entries,
        degenerate: members.len() == 1,
        short,
    })
}

pub fn rank_by_dxs_cohort(members: &[SnapshotBond], k: usize) -> Result<RankedList> {
    rank_by_cohort(members, &dxs_neighbor_order(members), RankMethod::DxsCohort, k)
}

/// Neighbors are drawn from the group only.
pub fn rank_by_similarity_cohort(members: &[SnapshotBond], index: &ProximityIndex, k: usize) -> Result<RankedList> {
    let order = similarity_neighbor_order(members, index)?;
    rank_by_cohort(members, &order, RankMethod::SimilarityCohort, k)
}

/// Every method and, for the cohort methods, every `k`. Neighbor orders are
/// computed once per method.
pub fn rank_all(members: &[SnapshotBond], index: &ProximityIndex, ks: &[usize]) -> Result<Vec<RankedList>> {
    let mut out = vec![rank_by_yield(members)];
    let dxs = dxs_neighbor_order(members);
    for &k in ks {
        out.push(rank_by_cohort(members, &dxs, RankMethod::DxsCohort, k)?);
    }
    let sim = similarity_neighbor_order(members, index)?;
    for &k in ks {
        out.push(rank_by_cohort(members, &sim, RankMethod::SimilarityCohort, k)?);
    }
    Ok(out)
}

/// Partitions snapshot positions by generic group, sorted by key; members
/// keep their snapshot order.
pub fn group_members(keys: &[GroupKey]) -> Vec<(GroupKey, Vec<usize>)> {
    let mut map: std::collections::BTreeMap<&GroupKey, Vec<usize>> = Default::default();
    for (i, key) in keys.iter().enumerate() {
        map.entry(key).or_default().push(i);
    }
    map.into_iter().map(|(k, v)| (k.clone(), v)).collect()
}

/// One ranked group on one date, ready for export.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRanking {
    pub date: String,
    pub group: GroupKey,
    pub list: RankedList,
}

pub fn write_rankings_csv(path: &Path, rankings: &[GroupRanking], provenance: Option<&str>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    if let Some(p) = provenance {
        writeln!(file, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["date", "group_key", "method", "k", "rank", "bond_id", "score", "rv"])?;
    for g in rankings {
        let key = g.group.to_string();
        let k = g.list.k.map(|k| k.to_string()).unwrap_or_default();
        for (r, e) in g.list.entries.iter().enumerate() {
            w.write_record([
                g.date.as_str(),
                &key,
                g.list.method.as_str(),
                &k,
                &(r + 1).to_string(),
                &e.bond_id,
                &e.score.to_string(),
                &e.rv.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
