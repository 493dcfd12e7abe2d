//! Append-only CSV ledger of experiment runs.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};

pub const LEDGER_FILE: &str = "ledger.csv";

static WRITE_LOCK: Mutex<()> = Mutex::new(());

/// One ledger row. `metrics` excludes timing so that repeated runs with the
/// same seed produce identical metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLedgerEntry {
    pub id: String,
    pub experiment: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, Value>,
    pub assertions: BTreeMap<String, bool>,
    pub passed: bool,
    pub wall_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    experiment: String,
    command: String,
    config_hash: String,
    seed: u64,
    metrics: String,
    assertions: String,
    passed: bool,
    wall_seconds: f64,
}

fn io_err(e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => LabError::Io(e),
        other => LabError::ConfigInvalid(format!("ledger: {other:?}")),
    }
}

/// Reads every entry; a missing file is an empty ledger.
pub fn read_ledger(path: &Path) -> Result<Vec<RunLedgerEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rd = csv::Reader::from_path(path).map_err(io_err)?;
    let mut out = Vec::new();
    for row in rd.deserialize::<Row>() {
        let r = row.map_err(io_err)?;
        out.push(RunLedgerEntry {
            id: r.id,
            experiment: r.experiment,
            command: r.command,
            config_hash: r.config_hash,
            seed: r.seed,
            metrics: serde_json::from_str(&r.metrics)?,
            assertions: serde_json::from_str(&r.assertions)?,
            passed: r.passed,
            wall_seconds: r.wall_seconds,
        });
    }
    Ok(out)
}

/// Appends an entry and assigns its id `<command>-<hash prefix>-<seq>`,
/// where `seq` is one past the number of rows already present.
pub fn append_entry(path: &Path, mut entry: RunLedgerEntry) -> Result<RunLedgerEntry> {
    let _guard = WRITE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    let existing = read_ledger(path)?;
    let mut seq = existing.len() + 1;
    let prefix = &entry.config_hash[..entry.config_hash.len().min(12)];
    loop {
        let id = format!("{}-{prefix}-{seq:04}", entry.command);
        if !existing.iter().any(|e| e.id == id) {
            entry.id = id;
            break;
        }
        seq += 1;
    }
    let header = existing.is_empty() && std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut wr = csv::WriterBuilder::new().has_headers(header).from_writer(file);
    wr.serialize(Row {
        id: entry.id.clone(),
        experiment: entry.experiment.clone(),
        command: entry.command.clone(),
        config_hash: entry.config_hash.clone(),
        seed: entry.seed,
        metrics: serde_json::to_string(&entry.metrics)?,
        assertions: serde_json::to_string(&entry.assertions)?,
        passed: entry.passed,
        wall_seconds: entry.wall_seconds,
    })
    .map_err(io_err)?;
    wr.flush()?;
    Ok(entry)
}
