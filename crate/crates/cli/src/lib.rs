//! Experiment runner behind the `beacon-lab` binary.

pub mod config;
pub mod experiments;
pub mod report;
pub mod verify;

use std::time::{SystemTime, UNIX_EPOCH};

pub use config::{ConfigError, Experiment, ExperimentConfig, Format};
pub use experiments::{run_experiment, Outcome};
pub use report::{emit_report, load_report, Report, Row};

/// Runs `cfg` and wraps the rows in a report.
pub fn run_to_report(cfg: &ExperimentConfig, timestamp: bool) -> anyhow::Result<(Report, Outcome)> {
    let mut outcome = run_experiment(cfg)?;
    let ts = timestamp.then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = Report::new(cfg, std::mem::take(&mut outcome.rows), ts);
    Ok((report, outcome))
}
