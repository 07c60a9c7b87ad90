//! Writing a run's artifacts: CSV tables, the resolved configuration and a run record.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::table::Table;

/// Metadata written next to the outputs as `run.json`. Wall-clock time lives
/// here and nowhere else, so the CSVs stay byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    /// SHA-256 of the resolved configuration text.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub seed_offset: u64,
    pub wall_clock_seconds: f64,
    pub version: String,
    pub outputs: Vec<String>,
    /// Headline numbers, such as fitted slopes.
    pub measurements: Vec<(String, f64)>,
}

pub fn config_hash(resolved_toml: &str) -> String {
    hex::encode(Sha256::digest(resolved_toml.as_bytes()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Everything a command produced, ready to be written.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    /// Extra files such as networks, by file name.
    pub files: Vec<(String, Vec<u8>)>,
    pub measurements: Vec<(String, f64)>,
    /// A checked claim that failed; the outputs are still written.
    pub violation: Option<String>,
}

/// Writes `resolved_config.toml`, each table as `<name>.csv`, the extra
/// files, and `run.json` into `dir`. Returns the written paths.
pub fn write_run(
    dir: &Path,
    command: &str,
    resolved: &ExperimentConfig,
    seed_offset: u64,
    artifacts: &Artifacts,
    elapsed: Duration,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let config_text = resolved.to_toml();
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("resolved_config.toml", config_text.as_bytes())?;
    let mut outputs = Vec::new();
    for t in &artifacts.tables {
        let name = format!("{}.csv", t.name);
        put(&name, &t.to_csv())?;
        outputs.push(name);
    }
    for (name, bytes) in &artifacts.files {
        put(name, bytes)?;
        outputs.push(name.clone());
    }
    let record = RunRecord {
        command: command.to_string(),
        config_hash: config_hash(&config_text),
        seeds: resolved.seeds.clone(),
        seed_offset,
        wall_clock_seconds: elapsed.as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        measurements: artifacts.measurements.clone(),
    };
    let json = serde_json::to_string_pretty(&record).expect("run records serialize");
    put("run.json", json.as_bytes())?;
    Ok(written)
}

/// Reads a samples CSV: a header, then one row of `d` numbers per sample.
pub fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::input(path, e.to_string()))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::input(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| HarnessError::input(path, format!("row {}: {e}", i + 1)))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::input(path, format!("row {}: non-finite value", i + 1)));
        }
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(HarnessError::input(path, format!("row {} has {} columns, expected {}", i + 1, row.len(), first.len())));
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(HarnessError::input(path, "no samples"));
    }
    Ok(out)
}

/// One column per coordinate, one row per point.
pub fn samples_table(name: &str, points: &[Vec<f64>]) -> Table {
    let d = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new(name, &refs);
    for p in points {
        t.push(p.iter().map(|&v| crate::table::num(v)).collect());
    }
    t
}
