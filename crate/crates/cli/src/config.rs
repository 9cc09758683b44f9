//! Experiment configuration files.
//!
//! A config is TOML with a few top-level keys and a `[params]` table whose
//! shape depends on the experiment:
//!
//! ```toml
//! experiment = "forkless"
//! trials = 10000
//! seed = 7
//! confidence = 0.95
//! format = "csv"
//!
//! [params]
//! schedule = { kind = "always_filter" }
//! [params.config]
//! p = 0.2
//! ...
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use beacon_lab::backbone::{BackboneConfig, StrategySpec};
use beacon_lab::extractors::ExtractorKind;
use beacon_lab::forkless::{ForklessConfig, Schedule};
use beacon_lab::hybrid::HybridConfig;
use beacon_lab::multichain::MultiChainConfig;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Lowerbound,
    Forkless,
    Backbone,
    Hybrid,
    Multichain,
    Verify,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

fn default_p() -> String {
    "1/2".to_string()
}

fn default_d() -> u32 {
    2
}

fn default_extractor() -> ExtractorKind {
    ExtractorKind::Majority
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerboundParams {
    #[serde(default = "default_d")]
    pub d: u32,
    pub n: usize,
    /// Reset budget, as a fraction `a/b` or a decimal.
    #[serde(default = "default_p")]
    pub p: String,
    /// Applied to symbol LSBs.
    #[serde(default = "default_extractor")]
    pub extractor: ExtractorKind,
    /// Monte Carlo samples per decision for the efficient adversary; absent
    /// skips it.
    #[serde(default)]
    pub samples: Option<u32>,
}

impl LowerboundParams {
    pub fn p_rational(&self) -> Result<BigRational, String> {
        let p = if self.p.contains('.') {
            let f: f64 = self.p.parse().map_err(|_| format!("{:?} is not a number", self.p))?;
            BigRational::from_float(f).ok_or_else(|| format!("{:?} is not finite", self.p))?
        } else {
            BigRational::from_str(&self.p).map_err(|_| format!("{:?} is not a fraction", self.p))?
        };
        if !p.is_positive() || p > BigRational::one() {
            return Err(format!("{} is not in (0, 1]", self.p));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForklessParams {
    pub config: ForklessConfig,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneParams {
    pub config: BackboneConfig,
    pub strategy: StrategySpec,
    /// Adds the extractor bound for this `ε` to the bias row.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Depths `k` for common-prefix violation rows.
    #[serde(default)]
    pub prefix_ks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HybridAdversarySpec {
    None,
    /// Corrupts parties `0..corrupted` and skips reveals to force `desired`.
    Withhold { corrupted: usize, desired: u8 },
    /// Controls `quota` rounds, or `claim2_ell(r, epsilon)` if no quota.
    Adaptive {
        corrupted: usize,
        desired: u8,
        #[serde(default)]
        quota: Option<usize>,
        #[serde(default)]
        epsilon: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    Forkless {
        config: ForklessConfig,
        schedule: Schedule,
    },
    Backbone {
        config: BackboneConfig,
        strategy: StrategySpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridParams {
    pub config: HybridConfig,
    pub adversary: HybridAdversarySpec,
    /// Beacon for each round; an idle forkless chain of length `beacon_n`
    /// when absent.
    #[serde(default)]
    pub chain: Option<ChainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultichainParams {
    pub config: MultiChainConfig,
    pub schedule_a: Schedule,
    pub schedule_b: Schedule,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Lowerbound(LowerboundParams),
    Forkless(ForklessParams),
    Backbone(BackboneParams),
    Hybrid(HybridParams),
    Multichain(MultichainParams),
    Verify(VerifyParams),
}

impl Params {
    fn parse(experiment: Experiment, v: serde_json::Value) -> Result<Self, serde_json::Error> {
        use serde_json::from_value;
        Ok(match experiment {
            Experiment::Lowerbound => Params::Lowerbound(from_value(v)?),
            Experiment::Forkless => Params::Forkless(from_value(v)?),
            Experiment::Backbone => Params::Backbone(from_value(v)?),
            Experiment::Hybrid => Params::Hybrid(from_value(v)?),
            Experiment::Multichain => Params::Multichain(from_value(v)?),
            Experiment::Verify => Params::Verify(from_value(v)?),
        })
    }

    fn violations(&self) -> Vec<String> {
        fn prefixed(prefix: &str, v: Vec<(&'static str, String)>) -> Vec<String> {
            v.into_iter().map(|(f, r)| format!("{prefix}.{f}: {r}")).collect()
        }
        let mut out = Vec::new();
        match self {
            Params::Lowerbound(p) => {
                if p.d < 2 || p.d % 2 != 0 {
                    out.push(format!("params.d: {} must be even and at least 2", p.d));
                }
                if p.n == 0 {
                    out.push("params.n: must be at least 1".to_string());
                }
                match p.extractor {
                    ExtractorKind::Majority if p.n % 2 == 0 => {
                        out.push(format!("params.n: {} must be odd for majority", p.n));
                    }
                    ExtractorKind::IteratedMajority if !is_power_of_three(p.n) => {
                        out.push(format!("params.n: {} must be a power of 3", p.n));
                    }
                    _ => {}
                }
                if let Err(e) = p.p_rational() {
                    out.push(format!("params.p: {e}"));
                }
                if p.samples == Some(0) {
                    out.push("params.samples: must be at least 1".to_string());
                }
            }
            Params::Forkless(p) => out.extend(prefixed("params.config", p.config.violations())),
            Params::Backbone(p) => {
                out.extend(prefixed("params.config", p.config.violations()));
                out.extend(prefixed("params.strategy", p.strategy.violations()));
                if let Some(e) = p.epsilon {
                    if let Err(err) = p.config.upbound2(e) {
                        out.push(format!("params.epsilon: {err}"));
                    }
                }
            }
            Params::Hybrid(p) => {
                out.extend(prefixed("params.config", p.config.violations()));
                match &p.adversary {
                    HybridAdversarySpec::None => {}
                    HybridAdversarySpec::Withhold { corrupted, desired }
                    | HybridAdversarySpec::Adaptive {
                        corrupted, desired, ..
                    } => {
                        if *corrupted > p.config.m {
                            out.push(format!(
                                "params.adversary.corrupted: {corrupted} > m = {}",
                                p.config.m
                            ));
                        }
                        if *desired > 1 {
                            out.push(format!("params.adversary.desired: {desired} is not a bit"));
                        }
                    }
                }
                if let HybridAdversarySpec::Adaptive { quota, epsilon, .. } = &p.adversary {
                    match (quota, epsilon) {
                        (None, None) => out.push(
                            "params.adversary: adaptive needs quota or epsilon".to_string(),
                        ),
                        (None, Some(e)) => {
                            if let Err(err) = beacon_lab::hybrid::claim2_ell(p.config.r as u64, *e) {
                                out.push(format!("params.adversary.epsilon: {err}"));
                            }
                        }
                        _ => {}
                    }
                }
                match &p.chain {
                    Some(ChainSpec::Forkless { config, .. }) => {
                        out.extend(prefixed("params.chain.config", config.violations()));
                    }
                    Some(ChainSpec::Backbone { config, strategy }) => {
                        out.extend(prefixed("params.chain.config", config.violations()));
                        out.extend(prefixed("params.chain.strategy", strategy.violations()));
                    }
                    None => {}
                }
            }
            Params::Multichain(p) => out.extend(prefixed("params.config", p.config.violations())),
            Params::Verify(_) => {}
        }
        out
    }
}

fn is_power_of_three(mut n: usize) -> bool {
    if n == 0 {
        return false;
    }
    while n % 3 == 0 {
        n /= 3;
    }
    n == 1
}

fn default_trials() -> u64 {
    1000
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: Option<Experiment>,
    #[serde(default = "default_trials")]
    trials: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_confidence")]
    confidence: f64,
    #[serde(default)]
    output_path: Option<PathBuf>,
    #[serde(default)]
    format: Format,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub trials: u64,
    pub seed: u64,
    pub confidence: f64,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub params: Params,
}

impl ExperimentConfig {
    /// Parses TOML text. `experiment` is taken from the file unless given.
    pub fn from_toml(text: &str, experiment: Option<Experiment>) -> Result<Self, ConfigError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let json = serde_json::to_value(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_json(json, experiment)
    }

    /// Same from a JSON value, e.g. the config echoed in a report.
    pub fn from_json(v: serde_json::Value, experiment: Option<Experiment>) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let experiment = match (experiment, raw.experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(ConfigError::Invalid(vec![format!(
                    "experiment: command line says {a} but the file says {b}"
                )]))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(ConfigError::Invalid(vec!["experiment: missing".into()])),
        };
        let params_value = raw
            .params
            .unwrap_or_else(|| serde_json::Value::Object(Default::default()));
        let params = Params::parse(experiment, params_value)
            .map_err(|e| ConfigError::Parse(format!("params: {e}")))?;
        let cfg = ExperimentConfig {
            experiment,
            trials: raw.trials,
            seed: raw.seed,
            confidence: raw.confidence,
            output_path: raw.output_path,
            format: raw.format,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, experiment)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.trials == 0 && self.experiment != Experiment::Verify {
            v.push("trials: must be at least 1".to_string());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            v.push(format!("confidence: {} is not in (0, 1)", self.confidence));
        }
        v.extend(self.params.violations());
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FORKLESS: &str = r#"
experiment = "forkless"
trials = 100
seed = 3

[params]
schedule = { kind = "always_filter" }

[params.config]
p = 0.2
n = 101
x = 50.0
y_p = 9.0
t1 = 3.0
t2 = 9.0
epsilon = 0.1
"#;

    #[test]
    fn parses_a_forkless_config() {
        let c = ExperimentConfig::from_toml(FORKLESS, None).unwrap();
        assert_eq!(c.experiment, Experiment::Forkless);
        assert_eq!(c.trials, 100);
        assert_eq!(c.format, Format::Csv);
        let Params::Forkless(p) = &c.params else { panic!() };
        assert_eq!(p.schedule, Schedule::AlwaysFilter);
        assert_eq!(p.config.d, 1 << 16);
    }

    #[test]
    fn every_violation_is_listed() {
        let bad = FORKLESS
            .replace("p = 0.2", "p = 1.5")
            .replace("n = 101", "n = 100")
            .replace("seed = 3", "seed = 3\nconfidence = 2.0");
        let Err(ConfigError::Invalid(v)) = ExperimentConfig::from_toml(&bad, None) else {
            panic!("expected field errors");
        };
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].starts_with("confidence"));
        assert!(v[1].starts_with("params.config.p"));
        assert!(v[2].starts_with("params.config.n"));
    }

    #[test]
    fn unknown_keys_and_mismatched_experiment_are_rejected() {
        let extra = FORKLESS.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&extra, None),
            Err(ConfigError::Parse(_))
        ));
        let nested = FORKLESS.replace("y_p = 9.0", "y_p = 9.0\nz = 1");
        assert!(ExperimentConfig::from_toml(&nested, None).is_err());
        assert!(matches!(
            ExperimentConfig::from_toml(FORKLESS, Some(Experiment::Hybrid)),
            Err(ConfigError::Invalid(_))
        ));
        let fmt = FORKLESS.replace("seed = 3", "seed = 3\nformat = \"xml\"");
        assert!(ExperimentConfig::from_toml(&fmt, None).is_err());
    }

    #[test]
    fn verify_needs_no_params() {
        let c = ExperimentConfig::from_toml("", Some(Experiment::Verify)).unwrap();
        assert_eq!(c.params, Params::Verify(VerifyParams {}));
    }

    #[test]
    fn lowerbound_p_forms() {
        let mut p = LowerboundParams {
            d: 2,
            n: 3,
            p: "1/4".into(),
            extractor: ExtractorKind::Majority,
            samples: None,
        };
        assert_eq!(p.p_rational().unwrap(), BigRational::new(1.into(), 4.into()));
        p.p = "0.5".into();
        assert_eq!(p.p_rational().unwrap(), BigRational::new(1.into(), 2.into()));
        p.p = "3/2".into();
        assert!(p.p_rational().is_err());
    }
}
