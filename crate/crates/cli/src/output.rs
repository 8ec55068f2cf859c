//! Run artifacts: `<experiment>.csv`, `summary.json` and `manifest.json`.
//!
//! `summary.json` and the CSV depend only on the config and seed;
//! `manifest.json` also records wall time and the worker count.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::runner::{Check, Outcome};

pub const SUMMARY_SCHEMA: &str = include_str!("../../../schemas/summary.schema.json");
pub const MANIFEST_SCHEMA: &str = include_str!("../../../schemas/manifest.schema.json");
pub const CSV_COLUMNS: &str = include_str!("../../../schemas/csv_columns.json");

#[derive(Debug, Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    inputs: &'a RunConfig,
    results: &'a Value,
    checks: &'a [Check],
    passed: bool,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_seconds: f64,
    pub workers: usize,
    pub files: Vec<String>,
}

pub fn summary_json(cfg: &RunConfig, outcome: &Outcome) -> String {
    let s = Summary {
        experiment: cfg.experiment.name(),
        inputs: cfg,
        results: &outcome.results,
        checks: &outcome.checks,
        passed: outcome.passed(),
    };
    let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
    text.push('\n');
    text
}

/// Writes the three artifacts into `dir` and returns their paths.
pub fn write_artifacts(dir: &Path, cfg: &RunConfig, outcome: &Outcome, wall: f64, workers: usize) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{}.csv", cfg.experiment.name());
    let csv_path = dir.join(&csv_name);
    let file = BufWriter::new(fs::File::create(&csv_path)?);
    outcome
        .table
        .write_csv(file)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, summary_json(cfg, outcome))?;
    let manifest = Manifest {
        experiment: cfg.experiment.name().into(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: wall,
        workers,
        files: vec![csv_name, "summary.json".into(), "manifest.json".into()],
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(vec![csv_path, summary_path, manifest_path])
}

/// Documented CSV header for an experiment.
pub fn csv_columns(experiment: &str) -> Option<Vec<String>> {
    let v: Value = serde_json::from_str(CSV_COLUMNS).ok()?;
    let cols = v.get(experiment)?.as_array()?;
    cols.iter().map(|c| c.as_str().map(str::to_owned)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn schemas_parse_and_cover_every_experiment() {
        for text in [SUMMARY_SCHEMA, MANIFEST_SCHEMA, CSV_COLUMNS] {
            let _: Value = serde_json::from_str(text).unwrap();
        }
        for e in crate::config::Experiment::ALL {
            assert!(csv_columns(e.name()).is_some(), "{e}");
        }
    }

    #[test]
    fn selftest_summary_shape() {
        let cfg = RunConfig::default();
        let out = crate::runner::selftest();
        let v: Value = serde_json::from_str(&summary_json(&cfg, &out)).unwrap();
        assert_eq!(v["experiment"], json!("selftest"));
        assert_eq!(v["passed"], json!(true));
        assert_eq!(out.table.headers, csv_columns("selftest").unwrap());
    }
}
