use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use beacon_lab_cli::{emit_report, run_to_report, ConfigError, Experiment, ExperimentConfig, Format};
use clap::Parser;

/// Run a beacon-lab experiment and write a CSV or JSON report.
///
/// Exit status: 0 on success, 2 if some row violated its bound, 1 on a
/// config or runtime error.
#[derive(Debug, Parser)]
#[command(name = "beacon-lab", version)]
struct Args {
    experiment: Experiment,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    /// Overrides BEACON_LAB_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    no_timestamp: bool,
    /// Validate the config and exit.
    #[arg(long)]
    check: bool,
}

fn load(args: &Args) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path, Some(args.experiment))?,
        None if args.experiment == Experiment::Verify => {
            ExperimentConfig::from_toml("", Some(Experiment::Verify))?
        }
        None => return Err(ConfigError::Invalid(vec!["--config: required".into()])),
    };
    if let Ok(s) = std::env::var("BEACON_LAB_SEED") {
        cfg.seed = s
            .parse()
            .map_err(|_| ConfigError::Invalid(vec![format!("BEACON_LAB_SEED: {s:?} is not a u64")]))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    if let Some(o) = &args.out {
        cfg.output_path = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args, cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    if let Some(j) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("starting the thread pool")?;
    }
    let (report, outcome) = run_to_report(cfg, !args.no_timestamp)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(t) = &outcome.table {
        eprint!("{t}");
    }
    match &cfg.output_path {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            emit_report(&report, cfg.format, &mut w)?;
            w.flush()?;
        }
        None => emit_report(&report, cfg.format, io::stdout().lock())?,
    }
    Ok(report.violated())
}

fn main() -> ExitCode {
    // clap's own usage errors would exit 2, which is reserved for bound
    // violations.
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if args.check {
        eprintln!("config ok");
        return ExitCode::SUCCESS;
    }
    match run(&args, &cfg) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("bound violated");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
