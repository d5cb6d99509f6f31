use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use feta_eval::metrics::CONVENTIONS;
use feta_eval::LabelSchema;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "feta-eval";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identity of a run's semantics: conventions, version, seed and schema.
/// Worker count and wall-clock do not enter the hash.
pub fn manifest_hash(seed: u64, schema: &LabelSchema) -> String {
    let conventions: BTreeMap<_, _> = CONVENTIONS.iter().copied().collect();
    let canonical = json!({
        "tool": TOOL,
        "version": VERSION,
        "conventions": conventions,
        "seed": seed,
        "schema": schema,
    });
    let digest = Sha256::digest(serde_json::to_vec(&canonical).expect("serialisable"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub team: String,
    pub case_id: String,
    /// `missing` or `failed`.
    pub status: &'static str,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub manifest_hash: String,
    pub conventions: BTreeMap<&'static str, &'static str>,
    pub seed: u64,
    pub schema: &'a LabelSchema,
    pub workers: usize,
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub teams: Vec<String>,
    pub cases: usize,
    pub issues: Vec<Issue>,
}

pub struct Clock {
    started: SystemTime,
    t0: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Clock { started: SystemTime::now(), t0: Instant::now() }
    }

    pub fn started_unix_s(&self) -> u64 {
        self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.t0.elapsed().as_secs_f64()
    }
}

/// Writes `value` wrapped as `{ "manifest_hash": .., "data": value }`.
pub fn write_json_mirror<T: Serialize>(path: &Path, hash: &str, value: &T) -> Result<()> {
    let doc = json!({ "manifest_hash": hash, "data": value });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
