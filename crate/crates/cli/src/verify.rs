//! Fast invariant checks run by the `verify` experiment.

use beacon_lab::backbone::{run_pi_beacon, BackboneConfig, Release, StrategySpec};
use beacon_lab::extractors::{worst_case_majority_bias, ell_for};
use beacon_lab::forkless::{run_forkless_beacon, two_mode_policy, ForklessConfig, Schedule};
use beacon_lab::hybrid::{
    claim2_ell, emit_cltv_script, optimal_adaptive_bias, parse_cltv_script, pivotal_probability,
    xor_uniform_exact, CombineKind,
};
use beacon_lab::lowerbound::{
    build_adversarial_source, claim_chain_holds, exact_sampler_pmf, measured_bias, resettable_sampler,
    PerturbedDistribution,
};
use beacon_lab::multichain::choose_w;
use beacon_lab::rng::rng_from_seed;
use beacon_lab::stats::{central_binomial_mass, stirling_majority_bound};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn lower_bound_small_extractors() -> bool {
    [rat(1, 4), rat(1, 2), rat(1, 1)].iter().all(|p| {
        (1..=2usize).all(|n| {
            let size = 1usize << n;
            (0..1u32 << size).all(|table| {
                let e = |w: &[u32]| {
                    let idx = w.iter().enumerate().fold(0, |a, (i, &s)| a | (s as usize) << i);
                    (table >> idx & 1) as u8
                };
                let src = build_adversarial_source(e, 2, n, p.clone()).expect("small");
                measured_bias(e, &src) >= p / rat(12, 1)
            })
        })
    })
}

fn sampler_embedding() -> bool {
    let mut rng = rng_from_seed(0x5a);
    (0..200).all(|_| {
        let d = 2 * rng.random_range(1..=4u32);
        let half = rat(rng.random_range(1..=100), 200);
        // Paired offsets keep the total at 1 and every mass in the box.
        let mut pmf = Vec::new();
        for _ in 0..d / 2 {
            let r = rat(rng.random_range(-20..=20), 20);
            pmf.push((rat(1, 1) + &r * &half) / rat(d as i64, 1));
            pmf.push((rat(1, 1) - &r * &half) / rat(d as i64, 1));
        }
        let x = PerturbedDistribution::new(half, pmf.clone()).expect("in box");
        exact_sampler_pmf(&resettable_sampler(&x).expect("valid")) == pmf
    })
}

fn majority_lemma() -> bool {
    [0.3, 0.5, 0.8].iter().all(|&eps| {
        (3..=15u64).step_by(2).all(|n| {
            let ell = ell_for(n, eps).expect("valid");
            let c = ell.saturating_sub(1).min(n - 1);
            worst_case_majority_bias(n, c).expect("valid").to_f64().unwrap() <= eps / 2.0
        })
    })
}

fn stirling() -> bool {
    (1..=64u64).all(|n| central_binomial_mass(n).to_f64().unwrap() <= stirling_majority_bound(n))
}

fn forkless_ledgers_balance() -> bool {
    let cfg = ForklessConfig::exemplary(101, 0.1, 3.0, 9.0);
    let policy = two_mode_policy(Schedule::HonestUntilCapExhausted);
    (0..100).all(|s| run_forkless_beacon(&cfg, &policy, s).expect("valid").ledger.is_conserved())
}

fn backbone_adopts_longest() -> bool {
    let cfg = BackboneConfig::new(9, 3, 0.02, 21, 3);
    let spec = StrategySpec::Withhold {
        release: Release::Override,
        abandon_gap: 24,
    };
    (0..5).all(|s| run_pi_beacon(&cfg, &spec, s).map(|(_, t)| t.adopts_longest_known()).unwrap_or(false))
}

pub fn run_checks() -> Vec<Check> {
    let cltv = emit_cltv_script(500000, "ab12", "02ff").ok();
    let checks: Vec<(&'static str, Box<dyn Fn() -> bool>)> = vec![
        ("lowerbound_p_over_12_small_extractors", Box::new(lower_bound_small_extractors)),
        ("inequality_chain_q_p_over_6", Box::new(|| (1..=6).all(|k| claim_chain_holds(&rat(k, 36))))),
        ("sampler_embedding_exact", Box::new(sampler_embedding)),
        ("majority_extractor_lemma", Box::new(majority_lemma)),
        ("stirling_central_mass", Box::new(stirling)),
        ("forkless_ledger_conservation", Box::new(forkless_ledgers_balance)),
        ("backbone_longest_chain_rule", Box::new(backbone_adopts_longest)),
        (
            "pivotal_probabilities",
            Box::new(|| {
                pivotal_probability(CombineKind::Majority, 9, 1).ok() == Some(rat(70, 256))
                    && pivotal_probability(CombineKind::IteratedMajority, 9, 1).ok() == Some(rat(1, 4))
            }),
        ),
        (
            "cltv_template",
            Box::new(move || {
                cltv.as_deref()
                    == Some("500000 CHECKLOCKTIMEVERIFY IF HASH256 ab12 EQUALVERIFY 02ff CHECKSIGVERIFY ENDIF")
                    && cltv.as_deref().and_then(|s| parse_cltv_script(s).ok())
                        == Some((500000, "ab12".into(), "02ff".into()))
            }),
        ),
        ("xor_uniform_m_le_4", Box::new(|| (1..=4).all(xor_uniform_exact))),
        (
            "adaptive_equals_fixed_control",
            Box::new(|| {
                (1..=9usize).step_by(2).all(|r| {
                    (0..r).all(|q| {
                        optimal_adaptive_bias(r, q).ok() == worst_case_majority_bias(r as u64, q as u64).ok()
                    })
                })
            }),
        ),
        (
            "claim2_ell_examples",
            Box::new(|| claim2_ell(10_000, 0.05).ok() == Some(10) && claim2_ell(101, 0.2).ok() == Some(3)),
        ),
        (
            "choose_w_examples",
            Box::new(|| {
                [5, 10, 25].iter().all(|&m| choose_w(100.0, 50.0, m).ok() == Some(2 * m))
                    && choose_w(3.0, 2.0, 10).ok() == Some(15)
            }),
        ),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check { name, ok: f() })
        .collect()
}

pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!(
            "{:<width$}  {}\n",
            c.name,
            if c.ok { "ok" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run_checks();
        let failed: Vec<_> = checks.iter().filter(|c| !c.ok).map(|c| c.name).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(render(&checks).lines().count() == checks.len());
    }
}
