//! Provenance stamps and artifact writers.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "relval";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the command, effective configuration and seed behind an output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// Digests the canonical JSON of `config`.
    pub fn new(command: &'static str, config: &impl Serialize, seed: u64) -> Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        Ok(Provenance {
            tool: TOOL,
            version: VERSION,
            command,
            config_sha256: sha256_hex(&canonical),
            seed,
        })
    }

    /// Single-line form used as a CSV comment.
    pub fn line(&self) -> String {
        format!(
            "{} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `value` as a JSON object with a top-level `provenance` member.
pub fn write_json(path: &Path, value: &impl Serialize, provenance: &Provenance, pretty: bool) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("provenance".into(), serde_json::to_value(provenance)?);
        }
        other => {
            v = serde_json::json!({ "provenance": provenance, "data": other.take() });
        }
    }
    let mut text = if pretty {
        serde_json::to_string_pretty(&v)?
    } else {
        serde_json::to_string(&v)?
    };
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a JSON config, falling back to the type's defaults without a path.
/// A `provenance` member left by an earlier run is ignored.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
