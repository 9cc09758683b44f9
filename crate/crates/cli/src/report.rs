//! Report rows and their CSV and JSON encodings.
//!
//! CSV header, fixed:
//! `experiment,label,trials,seed,estimate,ci_halfwidth,bound,pass`.
//! `bound` and `pass` are empty when no bound applies.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "label",
    "trials",
    "seed",
    "estimate",
    "ci_halfwidth",
    "bound",
    "pass",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub label: String,
    pub trials: u64,
    pub seed: u64,
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON config echo.
    pub config_hash: String,
    pub seed: u64,
    pub trials: u64,
    /// Seconds since the Unix epoch; `None` when suppressed.
    pub timestamp: Option<u64>,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new(cfg: &ExperimentConfig, rows: Vec<Row>, timestamp: Option<u64>) -> Self {
        let config = serde_json::to_value(cfg).expect("config serializes");
        Report {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment.to_string(),
            config_hash: config_hash(&config),
            config,
            seed: cfg.seed,
            trials: cfg.trials,
            timestamp,
            rows,
        }
    }

    /// True if any row failed its bound.
    pub fn violated(&self) -> bool {
        self.rows.iter().any(|r| r.pass == Some(false))
    }

    /// Re-parses the echoed config.
    pub fn echoed_config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::from_json(self.config.clone(), None)?)
    }
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("value serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == CSV_HEADER, "unexpected CSV header {header:?}");
    rd.deserialize().map(|r| Ok(r?)).collect()
}

pub fn emit_report<W: Write>(report: &Report, format: Format, mut w: W) -> Result<()> {
    match format {
        Format::Csv => write_csv(&report.rows, w),
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n")?;
            Ok(())
        }
    }
}

/// Companion loader for JSON reports.
pub fn load_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: Report = serde_json::from_str(&text).context("parsing report")?;
    anyhow::ensure!(
        report.schema_version == SCHEMA_VERSION,
        "schema_version {} is not {SCHEMA_VERSION}",
        report.schema_version
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, bound: Option<f64>) -> Row {
        Row {
            experiment: "forkless".into(),
            label: label.into(),
            trials: 10,
            seed: 1,
            estimate: 0.125,
            ci_halfwidth: 0.5,
            bound,
            pass: bound.map(|b| 0.125 <= b),
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment,label,trials,seed,estimate,ci_halfwidth,bound,pass\n"
        );
    }

    #[test]
    fn csv_round_trips() {
        let rows = vec![row("a", Some(0.2)), row("b", None)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("forkless,b,10,1,0.125,0.5,,\n"), "{text}");
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn hash_is_stable() {
        let v = serde_json::json!({"a": 1});
        assert_eq!(config_hash(&v), config_hash(&v.clone()));
        assert_eq!(config_hash(&v).len(), 64);
        assert_ne!(config_hash(&v), config_hash(&serde_json::json!({"a": 2})));
    }
}
