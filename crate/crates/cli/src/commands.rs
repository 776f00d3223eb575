use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use relval_core::backtest::{run_backtest, BacktestConfig};
use relval_core::baselines::{
    train_decision_tree, train_elastic_net, train_random_forest, ElasticNetConfig, EncodedFold, ForestConfig,
    TreeConfig,
};
use relval_core::data::{read_dataset, write_dataset};
use relval_core::explain::{global_importance, tree_shap, write_attributions_csv};
use relval_core::gbdt::{random_search_tune, TuneSpace};
use relval_core::metrics::{evaluate, RegressionMetrics};
use relval_core::pipeline::{fit_similarity, prepare_folds, run_training, PipelineConfig};
use relval_core::proximity::write_neighbor_table;
use relval_core::synthgen::{generate_market, GeneratorConfig};
use relval_core::valuation::{
    assign_generic_group, group_members, rank_by_dxs_cohort, rank_by_similarity_cohort, rank_by_yield,
    write_rankings_csv, GroupColumns, GroupKey, GroupRanking, RankMethod, SnapshotBond,
};
use relval_core::{Dataset, Error, GbdtModel, ProximityIndex, TrainConfig};

use crate::provenance::{file_sha256, load_config, write_json, Provenance};

fn load_data(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<GbdtModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    GbdtModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn datagen(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut config: GeneratorConfig = load_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let prov = Provenance::new("datagen", &config, config.seed)?;
    let market = generate_market(&config)?;
    write_dataset(out, &market.dataset, Some(&prov.line()))?;
    market.paths.write_csv(&out.join("paths.csv"), Some(&prov.line()))?;
    market
        .orders
        .write_csv(&out.join("orders.csv"), &market.dataset.ids(), Some(&prov.line()))?;
    write_json(&out.join("generator.json"), &config, &prov, true)?;
    log::info!("wrote {} bonds to {}", market.dataset.len(), out.display());
    Ok(())
}

pub fn train(
    data: &Path,
    config: Option<&Path>,
    model_path: &Path,
    metrics: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut config: PipelineConfig = load_config(config)?;
    if let Some(s) = seed {
        config.split_seed = s;
        config.train.seed = s;
    }
    let prov = Provenance::new("train", &config, config.train.seed)?;
    let data = load_data(data)?;
    let (model, _, report) = run_training(&data, &config)?;
    write_json(model_path, &model, &prov, false)?;
    let metrics = metrics.map_or_else(|| model_path.with_extension("metrics.json"), Path::to_path_buf);
    write_json(&metrics, &report, &prov, true)?;
    log::info!("trained {} trees", model.n_trees());
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselinesConfig {
    pub pipeline: PipelineConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub elastic_net: ElasticNetConfig,
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    model: String,
    target: String,
    fold: String,
    records: usize,
    #[serde(flatten)]
    metrics: RegressionMetrics,
}

pub fn baselines(
    data: &Path,
    target: &str,
    out: &Path,
    config: Option<&Path>,
    model: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut config: BaselinesConfig = load_config(config)?;
    if let Some(s) = seed {
        config.pipeline.split_seed = s;
        config.pipeline.train.seed = s;
        config.forest.seed = s;
    }
    let data = load_data(data)?;
    let dim = data.schema.target_index(target).ok_or_else(|| Error::UnknownToken {
        kind: "target",
        token: target.to_string(),
    })?;
    let gbdt = model.map(load_model).transpose()?;
    let prov = Provenance::new("baselines", &config, config.pipeline.split_seed)?;
    let folds = prepare_folds(&data, &config.pipeline)?;
    let fold = EncodedFold::new(&folds.train, &config.pipeline.train)?;
    create_dir(out)?;

    let tree = train_decision_tree(&fold, dim, &config.tree)?;
    write_json(&out.join("decision_tree.json"), &tree, &prov, false)?;
    let forest = train_random_forest(&fold, dim, &config.forest)?;
    write_json(&out.join("random_forest.json"), &forest, &prov, false)?;
    let enet = train_elastic_net(&fold, dim, &config.elastic_net)?;
    write_json(&out.join("elastic_net.json"), &enet, &prov, false)?;

    let mut rows = Vec::new();
    for (name, fold_data) in [("valid", &folds.valid), ("test", &folds.test)] {
        if fold_data.is_empty() {
            continue;
        }
        let actual = fold_data.target_column(dim);
        let weights = fold_data.weights();
        let mut predictions = vec![
            ("decision_tree", tree.predict(fold_data)?),
            ("random_forest", forest.predict(fold_data)?),
            ("elastic_net", enet.predict(fold_data)?),
        ];
        if let Some(m) = &gbdt {
            let p = m.predict(fold_data)?.into_iter().map(|p| p[dim]).collect();
            predictions.push(("gbdt", p));
        }
        for (model, pred) in predictions {
            rows.push(ComparisonRow {
                model: model.into(),
                target: target.into(),
                fold: name.into(),
                records: fold_data.len(),
                metrics: evaluate(&pred, &actual, Some(&weights))?,
            });
        }
    }
    write_json(
        &out.join("comparison.json"),
        &serde_json::json!({ "rows": rows }),
        &prov,
        true,
    )?;
    let file = fs::File::create(out.join("comparison.csv"))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["model", "target", "fold", "records", "mse", "mae", "mape", "r2"])?;
    for r in &rows {
        w.write_record([
            r.model.clone(),
            r.target.clone(),
            r.fold.clone(),
            r.records.to_string(),
            r.metrics.mse.to_string(),
            r.metrics.mae.to_string(),
            r.metrics.mape.to_string(),
            r.metrics.r2.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneJob {
    pub pipeline: PipelineConfig,
    pub space: TuneSpace,
}

pub fn tune(data: &Path, trials: usize, seed: u64, out: &Path, config: Option<&Path>) -> Result<()> {
    let job: TuneJob = load_config(config)?;
    let prov = Provenance::new("tune", &serde_json::json!({ "job": &job, "trials": trials }), seed)?;
    let data = load_data(data)?;
    let folds = prepare_folds(&data, &job.pipeline)?;
    let result = random_search_tune(&folds.train, &folds.valid, &job.space, trials, seed)?;
    create_dir(out)?;
    write_json(&out.join("trials.json"), &result, &prov, true)?;
    let best = PipelineConfig {
        train: result.best.clone(),
        ..job.pipeline
    };
    write_json(&out.join("best_config.json"), &best, &prov, true)?;
    log::info!(
        "best trial {} with validation MultiRMSE {:.5}",
        result.best_index,
        result.best_valid_multirmse
    );
    Ok(())
}

pub fn proximity(model_path: &Path, data: &Path, k: usize, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let params = serde_json::json!({ "model_sha256": file_sha256(model_path)?, "k": k });
    let prov = Provenance::new("proximity", &params, model.config.seed)?;
    let data = load_data(data)?;
    let index = ProximityIndex::from_gbdt(&model, &data)?;
    write_neighbor_table(out, &index, k, Some(&prov.line()))?;
    Ok(())
}

pub fn explain(model_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let params = serde_json::json!({ "model_sha256": file_sha256(model_path)? });
    let prov = Provenance::new("explain", &params, model.config.seed)?;
    let data = load_data(data)?;
    let attr = tree_shap(&model, &data)?;
    create_dir(out)?;
    write_attributions_csv(&out.join("shap.csv"), &attr, Some(&prov.line()))?;
    let importance = global_importance(&attr)?;
    write_json(
        &out.join("importance.json"),
        &serde_json::json!({ "base": attr.base, "targets": importance }),
        &prov,
        true,
    )?;
    Ok(())
}

pub fn rank(model_path: &Path, snapshot: &Path, method: &str, k: usize, date: &str, out: &Path) -> Result<()> {
    let method: RankMethod = method.parse()?;
    if method.uses_k() && k == 0 {
        bail!("k must be at least 1");
    }
    let model = load_model(model_path)?;
    let params = serde_json::json!({
        "model_sha256": file_sha256(model_path)?,
        "method": method.as_str(),
        "k": k,
        "date": date,
    });
    let prov = Provenance::new("rank", &params, model.config.seed)?;
    let snap = load_data(snapshot)?;
    let yield_dim = snap
        .schema
        .target_index("yield")
        .ok_or_else(|| anyhow!("snapshot has no yield target"))?;
    let cols = GroupColumns::from_schema(&snap.schema)?;
    let index = ProximityIndex::from_gbdt(&model, &snap)?;

    let mut bonds = Vec::with_capacity(snap.len());
    let mut keys: Vec<GroupKey> = Vec::with_capacity(snap.len());
    for (row, r) in snap.records.iter().enumerate() {
        match assign_generic_group(r, cols, 0.0) {
            Ok(key) => keys.push(key),
            Err(Error::InvalidArgument(msg)) => {
                log::warn!("{}: skipped ({msg})", r.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        bonds.push(SnapshotBond {
            id: r.id.clone(),
            row,
            yield_pct: r.targets[yield_dim],
            dxs: r.dxs,
        });
    }
    let groups: Vec<(GroupKey, Vec<SnapshotBond>)> = group_members(&keys)
        .into_iter()
        .filter_map(|(key, pos)| {
            if pos.len() < 2 {
                log::info!("group {key}: single bond, not ranked");
                return None;
            }
            Some((key, pos.iter().map(|&p| bonds[p].clone()).collect()))
        })
        .collect();
    let rankings = groups
        .into_par_iter()
        .map(|(group, members)| {
            let list = match method {
                RankMethod::Yield => rank_by_yield(&members),
                RankMethod::DxsCohort => rank_by_dxs_cohort(&members, k)?,
                RankMethod::SimilarityCohort => rank_by_similarity_cohort(&members, &index, k)?,
            };
            Ok(GroupRanking {
                date: date.to_string(),
                group,
                list,
            })
        })
        .collect::<relval_core::Result<Vec<_>>>()?;
    write_rankings_csv(out, &rankings, Some(&prov.line()))?;
    log::info!("ranked {} groups", rankings.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestJob {
    pub market: GeneratorConfig,
    /// Boosting model behind the similarity method, fitted on the whole universe.
    pub similarity: TrainConfig,
    pub backtest: BacktestConfig,
}

impl Default for BacktestJob {
    fn default() -> Self {
        BacktestJob {
            market: GeneratorConfig::default(),
            similarity: TrainConfig {
                n_estimators: 300,
                max_depth: 6,
                min_samples_leaf: 20,
                ..TrainConfig::default()
            },
            backtest: BacktestConfig::default(),
        }
    }
}

pub fn backtest(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut job: BacktestJob = load_config(config)?;
    if let Some(s) = seed {
        job.market.seed = s;
        job.similarity.seed = s;
        job.backtest.seed = s;
    }
    let prov = Provenance::new("backtest", &job, job.market.seed)?;
    let market = generate_market(&job.market)?;
    let (_, index) = fit_similarity(&market.dataset, &job.similarity)?;
    let report = run_backtest(&job.backtest, &market.dataset, &market.paths, &market.orders, &index)?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &report, &prov, true)?;
    let dist: PathBuf = out.join("distributions.csv");
    report.write_distributions_csv(&dist, Some(&prov.line()))?;
    log::info!("{} ranked units", report.ranked_units);
    Ok(())
}
