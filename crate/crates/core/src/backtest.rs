//! Ranking back-test: rank each day's offered bonds within their generic
//! groups, then score the rankings against realized yield changes.
//!
//! The unit of evaluation is one (day, group) pair. For a unit with `m`
//! surviving members and `top_m = 3`:
//!
//! - metric 1 hit: the initial rank-1 bond has realized rank <= 3;
//! - metric 2 hit: the realized rank-1 bond had initial rank <= 3.
//!
//! Metrics are hit percentages over all evaluable units; the combined metric
//! is their mean. Units with `m <= top_m` hit both trivially; they are counted
//! and reported separately.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::proximity::ProximityIndex;
use crate::rng;
use crate::synthgen::{MarketPath, TradeOrderBook};
use crate::valuation::{
    assign_generic_group, dxs_neighbor_order, group_members, rank_by_cohort, rank_by_yield, similarity_neighbor_order,
    GroupColumns, GroupKey, RankMethod, RankedList, SnapshotBond, CANONICAL_K,
};

/// Which yield move counts as a positive return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnSign {
    /// `y(T) - y(T + h)`: a cheap bond richening is a gain.
    YieldDecline,
    /// `y(T + h) - y(T)`.
    YieldRise,
}

impl ReturnSign {
    pub fn proxy(self, y_then: f64, y_later: f64) -> f64 {
        match self {
            ReturnSign::YieldDecline => y_then - y_later,
            ReturnSign::YieldRise => y_later - y_then,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Path day of the first order-book day.
    pub start_day: usize,
    pub horizons_months: Vec<usize>,
    pub month_days: usize,
    pub ks: Vec<usize>,
    pub methods: Vec<RankMethod>,
    pub top_m: usize,
    pub return_sign: ReturnSign,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            start_day: 0,
            horizons_months: vec![1, 2, 3, 6],
            month_days: 30,
            ks: CANONICAL_K.to_vec(),
            methods: RankMethod::ALL.to_vec(),
            top_m: 3,
            return_sign: ReturnSign::YieldDecline,
            bootstrap_resamples: 1000,
            seed: 0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.top_m == 0 {
            return bad("top_m must be at least 1");
        }
        if self.month_days == 0 {
            return bad("month_days must be positive");
        }
        if self.horizons_months.is_empty() || self.horizons_months.windows(2).any(|w| w[0] >= w[1]) {
            return bad("horizons must be nonempty and strictly ascending");
        }
        if self.horizons_months[0] == 0 {
            return bad("horizons must be positive");
        }
        if self.methods.is_empty() {
            return bad("no ranking methods selected");
        }
        if self.methods.iter().any(|m| m.uses_k()) && (self.ks.is_empty() || self.ks.contains(&0)) {
            return bad("cohort methods need positive k values");
        }
        Ok(())
    }

    /// `(method, k)` cells in report order.
    pub fn cells(&self) -> Vec<(RankMethod, Option<usize>)> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        methods
            .into_iter()
            .flat_map(|m| {
                if m.uses_k() {
                    self.ks.iter().map(|&k| (m, Some(k))).collect()
                } else {
                    vec![(m, None)]
                }
            })
            .collect()
    }
}

/// One ranked (day, group) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedUnit {
    pub day: usize,
    pub group: GroupKey,
    pub members: Vec<SnapshotBond>,
    /// One list per configured cell, in [`BacktestConfig::cells`] order.
    pub lists: Vec<RankedList>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCounts {
    pub skipped_days: usize,
    pub degenerate_groups: usize,
    pub matured_orders: usize,
    pub unquoted_orders: usize,
}

/// Quotes for one day's orders. DxS is re-marked with the yield move since
/// day 0, as an OAS implied from the quoted price would be.
fn snapshot(
    universe: &Dataset,
    paths: &MarketPath,
    orders: &[usize],
    day: usize,
    cols: GroupColumns,
    counts: &mut SnapshotCounts,
) -> Result<Vec<(GroupKey, SnapshotBond)>> {
    let mut out = Vec::with_capacity(orders.len());
    for &b in orders {
        let record = universe.records.get(b).ok_or(Error::IndexOutOfRange {
            index: b,
            len: universe.len(),
        })?;
        let (Some(y0), Some(y)) = (paths.yield_at(b, 0), paths.yield_at(b, day)) else {
            counts.unquoted_orders += 1;
            continue;
        };
        let key = match assign_generic_group(record, cols, day as f64) {
            Ok(k) => k,
            Err(Error::InvalidArgument(_)) => {
                counts.matured_orders += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push((
            key,
            SnapshotBond {
                id: record.id.clone(),
                row: b,
                yield_pct: y,
                dxs: record.dxs + record.duration * 100.0 * (y - y0),
            },
        ));
    }
    Ok(out)
}

/// Ranks every group with at least two offered bonds on every order day.
pub fn initial_rankings(
    book: &TradeOrderBook,
    universe: &Dataset,
    paths: &MarketPath,
    index: &ProximityIndex,
    config: &BacktestConfig,
) -> Result<(Vec<RankedUnit>, SnapshotCounts)> {
    config.validate()?;
    if paths.ids.len() != universe.len() || index.len() != universe.len() {
        return Err(Error::InvalidArgument(
            "paths, index and universe disagree in size".into(),
        ));
    }
    let cols = GroupColumns::from_schema(&universe.schema)?;
    let cells = config.cells();
    let mut counts = SnapshotCounts::default();
    let mut pending = Vec::new();
    for (d, orders) in book.days.iter().enumerate() {
        let day = config.start_day + d;
        if orders.is_empty() {
            log::info!("day {day}: no orders, skipped");
            counts.skipped_days += 1;
            continue;
        }
        let snap = snapshot(universe, paths, orders, day, cols, &mut counts)?;
        let keys: Vec<GroupKey> = snap.iter().map(|(k, _)| k.clone()).collect();
        for (key, positions) in group_members(&keys) {
            if positions.len() < 2 {
                counts.degenerate_groups += 1;
                continue;
            }
            let members: Vec<SnapshotBond> = positions.iter().map(|&p| snap[p].1.clone()).collect();
            pending.push((day, key, members));
        }
    }
    let units = pending
        .into_par_iter()
        .map(|(day, group, members)| {
            let dxs = cells
                .iter()
                .any(|c| c.0 == RankMethod::DxsCohort)
                .then(|| dxs_neighbor_order(&members));
            let sim = match cells.iter().any(|c| c.0 == RankMethod::SimilarityCohort) {
                true => Some(similarity_neighbor_order(&members, index)?),
                false => None,
            };
            let lists = cells
                .iter()
                .map(|&(method, k)| match (method, k) {
                    (RankMethod::Yield, _) => Ok(rank_by_yield(&members)),
                    (RankMethod::DxsCohort, Some(k)) => {
                        rank_by_cohort(&members, dxs.as_ref().expect("computed"), method, k)
                    }
                    (RankMethod::SimilarityCohort, Some(k)) => {
                        rank_by_cohort(&members, sim.as_ref().expect("computed"), method, k)
                    }
                    _ => unreachable!("cohort cells carry k"),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RankedUnit {
                day,
                group,
                members,
                lists,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((units, counts))
}

/// Realized ordering of a unit's members at `day + horizon_days`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalRanking {
    /// Member positions, best realized return first.
    pub order: Vec<usize>,
    /// Return proxy per member; `None` for members without a later quote.
    pub proxies: Vec<Option<f64>>,
    pub dropped: usize,
}

pub fn final_ranking(
    members: &[SnapshotBond],
    paths: &MarketPath,
    day: usize,
    horizon_days: usize,
    sign: ReturnSign,
) -> FinalRanking {
    let proxies: Vec<Option<f64>> = members
        .iter()
        .map(|b| {
            paths
                .yield_at(b.row, day + horizon_days)
                .map(|later| sign.proxy(b.yield_pct, later))
        })
        .collect();
    let mut order: Vec<usize> = (0..members.len()).filter(|&i| proxies[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (proxies[a].expect("kept") + 0.0, proxies[b].expect("kept") + 0.0);
        pb.total_cmp(&pa).then_with(|| members[a].id.cmp(&members[b].id))
    });
    let dropped = members.len() - order.len();
    FinalRanking {
        order,
        proxies,
        dropped,
    }
}

/// Both metric indicators for one unit. `initial` and `realized` are member
/// orders over the same set, best first.
pub fn unit_hits(initial: &[usize], realized: &[usize], top_m: usize) -> (bool, bool) {
    let top_in = |order: &[usize], member: usize| order.iter().take(top_m).any(|&x| x == member);
    match (initial.first(), realized.first()) {
        (Some(&i0), Some(&r0)) => (top_in(realized, i0), top_in(initial, r0)),
        _ => (false, false),
    }
}

/// Percentage of true flags; `None` when there are no units.
pub fn percent(hits: impl IntoIterator<Item = bool>) -> Option<f64> {
    let (n, k) = hits
        .into_iter()
        .fold((0usize, 0usize), |(n, k), h| (n + 1, k + h as usize));
    (n > 0).then(|| 100.0 * k as f64 / n as f64)
}

/// Share of units whose initial top pick realized within the top `top_m`.
pub fn metric_top_ranked_in_top_m(units: &[(Vec<usize>, Vec<usize>)], top_m: usize) -> Option<f64> {
    percent(units.iter().map(|(i, r)| unit_hits(i, r, top_m).0))
}

/// Share of units whose best realized return was initially in the top `top_m`.
pub fn metric_top_return_from_top_m(units: &[(Vec<usize>, Vec<usize>)], top_m: usize) -> Option<f64> {
    percent(units.iter().map(|(i, r)| unit_hits(i, r, top_m).1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub method: RankMethod,
    pub k: Option<usize>,
    pub horizon_months: usize,
    pub metric1: Option<f64>,
    pub metric2: Option<f64>,
    pub combined: Option<f64>,
    /// Bootstrap 95% interval of the combined metric over units.
    pub combined_ci95: Option<(f64, f64)>,
    pub units: usize,
    /// Units with no more than `top_m` members.
    pub small_units: usize,
    pub dropped_bonds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub method: RankMethod,
    pub k: Option<usize>,
    pub horizon_months: usize,
    pub group_key: String,
    pub day: usize,
    /// Unit score in percent: 0, 50 or 100.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub cells: Vec<MetricCell>,
    pub ranked_units: usize,
    pub distinct_groups: usize,
    pub counts: SnapshotCounts,
    #[serde(skip)]
    pub distributions: Vec<DistributionRow>,
}

impl BacktestReport {
    pub fn cell(&self, method: RankMethod, k: Option<usize>, horizon_months: usize) -> Option<&MetricCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.k == k && c.horizon_months == horizon_months)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_distributions_csv(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if let Some(p) = provenance {
            writeln!(file, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["method", "k", "horizon", "group_key", "day", "score"])?;
        for r in &self.distributions {
            w.write_record([
                r.method.as_str(),
                &r.k.map(|k| k.to_string()).unwrap_or_default(),
                &r.horizon_months.to_string(),
                &r.group_key,
                &r.day.to_string(),
                &r.score.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bootstrap_ci(scores: &[f64], resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if scores.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = rng::stream(seed, 0);
    let n = scores.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| scores[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Some((
        crate::data::percentile_sorted(&means, 2.5),
        crate::data::percentile_sorted(&means, 97.5),
    ))
}

/// Scores ranked units at every configured horizon.
pub fn evaluate_units(
    units: &[RankedUnit],
    paths: &MarketPath,
    config: &BacktestConfig,
) -> Result<(Vec<MetricCell>, Vec<DistributionRow>)> {
    config.validate()?;
    let cells = config.cells();
    let mut metric_cells = Vec::new();
    let mut rows = Vec::new();
    for &h in &config.horizons_months {
        let horizon_days = h * config.month_days;
        let finals: Vec<FinalRanking> = units
            .par_iter()
            .map(|u| final_ranking(&u.members, paths, u.day, horizon_days, config.return_sign))
            .collect();
        for (c, &(method, k)) in cells.iter().enumerate() {
            let mut scores = Vec::new();
            let (mut hits1, mut hits2) = (Vec::new(), Vec::new());
            let (mut small, mut dropped) = (0, 0);
            for (u, fin) in units.iter().zip(&finals) {
                dropped += fin.dropped;
                if fin.order.len() < 2 {
                    continue;
                }
                let initial: Vec<usize> = u.lists[c]
                    .entries
                    .iter()
                    .map(|e| e.member)
                    .filter(|&m| fin.proxies[m].is_some())
                    .collect();
                let (a, b) = unit_hits(&initial, &fin.order, config.top_m);
                if fin.order.len() <= config.top_m {
                    small += 1;
                }
                hits1.push(a);
                hits2.push(b);
                let score = 50.0 * (a as u8 + b as u8) as f64;
                scores.push(score);
                rows.push(DistributionRow {
                    method,
                    k,
                    horizon_months: h,
                    group_key: u.group.to_string(),
                    day: u.day,
                    score,
                });
            }
            let metric1 = percent(hits1);
            let metric2 = percent(hits2);
            let seed = rng::mix_seed(config.seed, (h * 1000 + c) as u64);
            metric_cells.push(MetricCell {
                method,
                k,
                horizon_months: h,
                metric1,
                metric2,
                combined: metric1.zip(metric2).map(|(a, b)| (a + b) / 2.0),
                combined_ci95: bootstrap_ci(&scores, config.bootstrap_resamples, seed),
                units: scores.len(),
                small_units: small,
                dropped_bonds: dropped,
            });
        }
    }
    Ok((metric_cells, rows))
}

pub fn run_backtest(
    config: &BacktestConfig,
    universe: &Dataset,
    paths: &MarketPath,
    orders: &TradeOrderBook,
    index: &ProximityIndex,
) -> Result<BacktestReport> {
    let (units, counts) = initial_rankings(orders, universe, paths, index, config)?;
    let (cells, distributions) = evaluate_units(&units, paths, config)?;
    let distinct_groups = units
        .iter()
        .map(|u| &u.group)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(BacktestReport {
        config: config.clone(),
        cells,
        ranked_units: units.len(),
        distinct_groups,
        counts,
        distributions,
    })
}
