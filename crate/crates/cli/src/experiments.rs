//! Dispatch from a config to the simulator and the rows it reports.

use anyhow::{Context, Result};
use beacon_lab::backbone::{common_prefix_violation_rates, estimate_backbone_bias};
use beacon_lab::error::Error;
use beacon_lab::extractors::{iterated_majority, lsb, majority, worst_case_majority_bias, ExtractorKind};
use beacon_lab::forkless::{estimate_forkless_bias, two_mode_policy, upbound1_bias_bound, ForklessConfig, Schedule};
use beacon_lab::hybrid::{
    adaptive_round_adversary, claim2_ell, run_hybrid_with, BackboneProvider, ChainProvider,
    ForklessProvider, HybridAdversary, NoAdversary, WithholdingAdversary,
};
use beacon_lab::lowerbound::{
    build_adversarial_source, measured_bias, run_efficient_adversary, run_resettable_adversary_with,
};
use beacon_lab::multichain::estimate_multichain;
use beacon_lab::rng::derive_seed;
use beacon_lab::stats::{hoeffding_halfwidth, map_trials, mean_and_se, normal_quantile, BiasReport, BitTally};
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::config::{
    BackboneParams, ChainSpec, ExperimentConfig, ForklessParams, HybridAdversarySpec, HybridParams,
    LowerboundParams, MultichainParams, Params,
};
use crate::report::Row;
use crate::verify;

#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub warnings: Vec<String>,
    /// Human-readable table printed to stderr.
    pub table: Option<String>,
}

struct RowBuilder<'a> {
    cfg: &'a ExperimentConfig,
}

impl RowBuilder<'_> {
    fn row(&self, label: impl Into<String>, estimate: f64, ci: f64, bound: Option<f64>, pass: Option<bool>) -> Row {
        Row {
            experiment: self.cfg.experiment.to_string(),
            label: label.into(),
            trials: self.cfg.trials,
            seed: self.cfg.seed,
            estimate,
            ci_halfwidth: ci,
            bound,
            pass,
        }
    }

    /// Upper-bound row: passes while the estimate is within `ci` of it.
    fn upper(&self, label: &str, r: &BiasReport, bound: Option<f64>) -> Row {
        let pass = bound.map(|b| r.estimate <= b + r.ci_halfwidth);
        self.row(label, r.estimate, r.ci_halfwidth, bound, pass)
    }

    /// Lower-bound row.
    fn lower(&self, label: &str, r: &BiasReport, bound: f64) -> Row {
        let pass = r.estimate + r.ci_halfwidth >= bound;
        self.row(label, r.estimate, r.ci_halfwidth, Some(bound), Some(pass))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let b = RowBuilder { cfg };
    match &cfg.params {
        Params::Lowerbound(p) => lowerbound(&b, p),
        Params::Forkless(p) => forkless(&b, p),
        Params::Backbone(p) => backbone(&b, p),
        Params::Hybrid(p) => hybrid(&b, p),
        Params::Multichain(p) => multichain(&b, p),
        Params::Verify(_) => {
            let checks = verify::run_checks();
            let table = verify::render(&checks);
            let rows = checks
                .iter()
                .map(|c| b.row(c.name, c.ok as u8 as f64, 0.0, None, Some(c.ok)))
                .collect();
            Ok(Outcome {
                rows,
                warnings: Vec::new(),
                table: Some(table),
            })
        }
    }
}

fn extractor(kind: ExtractorKind, d: u32) -> impl Fn(&[u32]) -> u8 + Sync {
    move |w: &[u32]| {
        let bits: Vec<u8> = w.iter().map(|&s| lsb(s, d).expect("d even")).collect();
        match kind {
            ExtractorKind::Majority => majority(&bits).expect("odd"),
            ExtractorKind::IteratedMajority => iterated_majority(&bits).expect("power of 3"),
        }
    }
}

fn lowerbound(b: &RowBuilder<'_>, p: &LowerboundParams) -> Result<Outcome> {
    let cfg = b.cfg;
    let pr = p.p_rational().map_err(anyhow::Error::msg)?;
    let pf = pr.to_f64().unwrap_or(f64::NAN);
    let e = extractor(p.extractor, p.d);
    let src = build_adversarial_source(&e, p.d, p.n, pr.clone()).context("building the source")?;
    let twelfth = &pr / BigRational::from_integer(12.into());
    let exact = measured_bias(&e, &src);
    let mut rows = vec![b.row(
        "exact",
        exact.to_f64().unwrap_or(f64::NAN),
        0.0,
        twelfth.to_f64(),
        Some(exact >= twelfth),
    )];

    let bits = map_trials(cfg.trials, cfg.seed, |rng, _| e(&run_resettable_adversary_with(&src, rng).word));
    rows.push(b.lower("resettable", &bias_report(&bits, cfg)?, pf / 12.0));

    if let Some(samples) = p.samples {
        let favored = src.favored();
        let bits = map_trials(cfg.trials, cfg.seed, |_, i| {
            let seed = derive_seed(cfg.seed, i);
            e(&run_efficient_adversary(&e, p.d, p.n, pf, favored, samples, seed).word)
        });
        rows.push(b.lower("efficient", &bias_report(&bits, cfg)?, pf / 13.0));
    }
    Ok(Outcome {
        rows,
        ..Default::default()
    })
}

fn bias_report(bits: &[u8], cfg: &ExperimentConfig) -> Result<BiasReport> {
    let mut t = BitTally::default();
    for &bit in bits {
        t.record(bit);
    }
    Ok(BiasReport::from_tally(t, cfg.seed, cfg.confidence)?)
}

fn bound_or_warning(r: beacon_lab::error::Result<f64>, warnings: &mut Vec<String>) -> Result<Option<f64>> {
    match r {
        Ok(b) => Ok(Some(b)),
        Err(Error::BoundNotApplicable(why)) => {
            warnings.push(format!("no bound: {why}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn forkless(b: &RowBuilder<'_>, p: &ForklessParams) -> Result<Outcome> {
    let cfg = b.cfg;
    let policy = two_mode_policy(p.schedule);
    let report = estimate_forkless_bias(&p.config, &policy, cfg.trials, cfg.seed, cfg.confidence)?;
    let mut warnings = Vec::new();
    let bound = bound_or_warning(upbound1_bias_bound(&p.config), &mut warnings)?;
    Ok(Outcome {
        rows: vec![b.upper("bias", &report, bound)],
        warnings,
        table: None,
    })
}

fn backbone(b: &RowBuilder<'_>, p: &BackboneParams) -> Result<Outcome> {
    let cfg = b.cfg;
    let (report, timeouts) =
        estimate_backbone_bias(&p.config, &p.strategy, cfg.trials, cfg.seed, cfg.confidence)?;
    let mut warnings = Vec::new();
    if timeouts > 0 {
        warnings.push(format!("{timeouts} of {} runs timed out", cfg.trials));
    }
    let bound = match p.epsilon {
        Some(eps) => {
            let (ell, _) = p.config.upbound2(eps)?;
            if ell >= p.config.n {
                None
            } else {
                worst_case_majority_bias(p.config.n, ell)?.to_f64()
            }
        }
        None => None,
    };
    let mut rows = vec![b.upper("bias", &report, bound)];
    if !p.prefix_ks.is_empty() {
        let rates = common_prefix_violation_rates(&p.config, &p.strategy, &p.prefix_ks, cfg.trials, cfg.seed)?;
        let hw = hoeffding_halfwidth(cfg.trials, cfg.confidence)?;
        for (k, rate) in p.prefix_ks.iter().zip(rates) {
            rows.push(b.row(format!("prefix_violation_k{k}"), rate, hw, None, None));
        }
    }
    Ok(Outcome {
        rows,
        warnings,
        table: None,
    })
}

fn chain_provider(p: &HybridParams) -> Box<dyn ChainProvider> {
    match &p.chain {
        Some(ChainSpec::Forkless { config, schedule }) => Box::new(ForklessProvider {
            cfg: config.clone(),
            policy: two_mode_policy(*schedule),
        }),
        Some(ChainSpec::Backbone { config, strategy }) => Box::new(BackboneProvider {
            cfg: config.clone(),
            spec: strategy.clone(),
        }),
        None => Box::new(ForklessProvider {
            cfg: ForklessConfig::exemplary(p.config.beacon_n as usize, 0.1, 3.0, 9.0),
            policy: two_mode_policy(Schedule::AlwaysHonest),
        }),
    }
}

fn hybrid(b: &RowBuilder<'_>, p: &HybridParams) -> Result<Outcome> {
    let cfg = b.cfg;
    let r = p.config.r;
    let (quota, bound) = match &p.adversary {
        HybridAdversarySpec::Adaptive { quota, epsilon, .. } => {
            let q = match (quota, epsilon) {
                (Some(q), _) => *q,
                (None, Some(e)) => claim2_ell(r as u64, *e)? as usize,
                (None, None) => unreachable!("validated"),
            };
            (q, *epsilon)
        }
        _ => (0, None),
    };
    let make = || -> Box<dyn HybridAdversary> {
        match &p.adversary {
            HybridAdversarySpec::None => Box::new(NoAdversary),
            HybridAdversarySpec::Withhold { corrupted, desired } => Box::new(WithholdingAdversary::new(
                (0..*corrupted).collect(),
                *desired,
                p.config.m,
            )),
            HybridAdversarySpec::Adaptive { corrupted, desired, .. } => Box::new(
                adaptive_round_adversary(quota, (0..*corrupted).collect(), *desired, r),
            ),
        }
    };
    let runs = map_trials(cfg.trials, cfg.seed, |rng, _| {
        let mut adv = make();
        let mut chain = chain_provider(p);
        run_hybrid_with(&p.config, adv.as_mut(), chain.as_mut(), rng).map(|h| (h.bit, h.destroyed))
    });
    let runs: Vec<(u8, f64)> = runs.into_iter().collect::<beacon_lab::error::Result<_>>()?;
    let bits: Vec<u8> = runs.iter().map(|r| r.0).collect();
    let report = bias_report(&bits, cfg)?;
    let destroyed: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mean, se) = mean_and_se(&destroyed);
    let z = normal_quantile(cfg.confidence)?;
    Ok(Outcome {
        rows: vec![
            b.upper("bias", &report, bound),
            b.row("destroyed_coins", mean, z * se, None, None),
        ],
        warnings: Vec::new(),
        table: None,
    })
}

fn multichain(b: &RowBuilder<'_>, p: &MultichainParams) -> Result<Outcome> {
    let cfg = b.cfg;
    let (report, forgone) = estimate_multichain(
        &p.config,
        &two_mode_policy(p.schedule_a),
        &two_mode_policy(p.schedule_b),
        cfg.trials,
        cfg.seed,
        cfg.confidence,
    )?;
    Ok(Outcome {
        rows: vec![
            b.upper("bias", &report, None),
            b.row("forgone_value", forgone, 0.0, None, None),
        ],
        warnings: p.config.warnings(),
        table: None,
    })
}
