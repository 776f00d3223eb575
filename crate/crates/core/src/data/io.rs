//! CSV + JSON sidecar persistence for datasets.
//!
//! `dataset.csv` holds one row per record with the header
//! `id, <features...>, <targets...>, duration, dxs, last_trade_offset_days`
//! and an optional trailing `sample_weight` column. `schema.json` next to it
//! declares feature kinds, units and target names. Lines starting with `#`
//! are provenance comments and are skipped on read.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BondRecord, Dataset, FeatureKind, FeatureSchema, FeatureValue, MISSING_TOKEN};
use crate::error::{Error, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const SCHEMA_FILE: &str = "schema.json";

const TAIL_COLUMNS: [&str; 3] = ["duration", "dxs", "last_trade_offset_days"];
const WEIGHT_COLUMN: &str = "sample_weight";

/// Writes `dataset.csv` and `schema.json` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, dataset: &Dataset, provenance: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let schema_json = serde_json::to_string_pretty(&dataset.schema)?;
    fs::write(dir.join(SCHEMA_FILE), schema_json + "\n")?;

    let mut file = fs::File::create(dir.join(DATASET_FILE))?;
    if let Some(p) = provenance {
        writeln!(file, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = vec!["id"];
    header.extend(dataset.schema.features.iter().map(|f| f.name.as_str()));
    header.extend(dataset.schema.target_names.iter().map(String::as_str));
    header.extend(TAIL_COLUMNS);
    if dataset.sample_weights.is_some() {
        header.push(WEIGHT_COLUMN);
    }
    w.write_record(&header)?;
    for (i, r) in dataset.records.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.id.clone());
        row.extend(r.features.iter().map(ToString::to_string));
        row.extend(r.targets.iter().map(ToString::to_string));
        row.push(r.duration.to_string());
        row.push(r.dxs.to_string());
        row.push(r.last_trade_offset_days.map(|d| d.to_string()).unwrap_or_default());
        if let Some(ws) = &dataset.sample_weights {
            row.push(ws[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset from a directory (`dataset.csv` + `schema.json`) or from a
/// CSV path whose directory holds `schema.json`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (csv_path, schema_path) = resolve_paths(path);
    let schema: FeatureSchema = serde_json::from_str(&fs::read_to_string(&schema_path)?)?;
    schema.check()?;

    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&csv_path)?;
    let header = reader.headers()?.clone();
    let n_f = schema.n_features();
    let n_t = schema.n_targets();
    let base_len = 1 + n_f + n_t + TAIL_COLUMNS.len();
    let has_weights = header.len() == base_len + 1 && &header[base_len] == WEIGHT_COLUMN;
    let mut expected: Vec<&str> = vec!["id"];
    expected.extend(schema.features.iter().map(|f| f.name.as_str()));
    expected.extend(schema.target_names.iter().map(String::as_str));
    expected.extend(TAIL_COLUMNS);
    if header.len() < base_len || header.iter().take(base_len).ne(expected.iter().copied()) {
        return Err(Error::SchemaMismatch(format!(
            "csv header {:?} does not match schema order {:?}",
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }

    let mut records = Vec::new();
    let mut weights = Vec::new();
    for row in reader.records() {
        let row = row?;
        let id = row[0].to_string();
        let mut features = Vec::with_capacity(n_f);
        for (j, spec) in schema.features.iter().enumerate() {
            let cell = row[1 + j].trim();
            features.push(match spec.kind {
                FeatureKind::Numerical => FeatureValue::Num(parse_num(cell, &id, &spec.name)?),
                FeatureKind::Categorical if cell.is_empty() => FeatureValue::Cat(MISSING_TOKEN.into()),
                FeatureKind::Categorical => FeatureValue::Cat(cell.to_string()),
            });
        }
        let mut targets = Vec::with_capacity(n_t);
        for (j, name) in schema.target_names.iter().enumerate() {
            targets.push(parse_num(row[1 + n_f + j].trim(), &id, name)?);
        }
        let tail = 1 + n_f + n_t;
        let duration = parse_num(row[tail].trim(), &id, "duration")?;
        let dxs = parse_num(row[tail + 1].trim(), &id, "dxs")?;
        let offset_cell = row[tail + 2].trim();
        let last_trade_offset_days = if offset_cell.is_empty() {
            None
        } else {
            Some(offset_cell.parse::<u32>().map_err(|_| {
                Error::InvalidArgument(format!("record '{id}': bad last_trade_offset_days '{offset_cell}'"))
            })?)
        };
        if has_weights {
            weights.push(parse_num(row[base_len].trim(), &id, WEIGHT_COLUMN)?);
        }
        records.push(BondRecord {
            id,
            features,
            targets,
            duration,
            dxs,
            last_trade_offset_days,
        });
    }
    let mut ds = Dataset::new(schema, records);
    if has_weights {
        ds.sample_weights = Some(weights);
    }
    Ok(ds)
}

fn resolve_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(DATASET_FILE), path.join(SCHEMA_FILE))
    } else {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        (path.to_path_buf(), dir.join(SCHEMA_FILE))
    }
}

fn parse_num(cell: &str, id: &str, field: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::InvalidArgument(format!("record '{id}', field '{field}': cannot parse '{cell}'")))
}
