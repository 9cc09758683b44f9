use beacon_lab::backbone::*;
use beacon_lab::extractors::worst_case_majority_bias;
use beacon_lab::stats::{hoeffding_halfwidth, mean_and_se};
use num_traits::ToPrimitive;

fn dd(budget: Option<BudgetConfig>, idle_every: Option<u64>) -> StrategySpec {
    StrategySpec::DiscardDetrimental {
        favored: 1,
        budget,
        idle_every,
    }
}

fn window_counts(runs: &[BeaconOutcome]) -> Vec<f64> {
    runs.iter()
        .map(|o| o.window_adversary_blocks.expect("finished") as f64)
        .collect()
}

#[test]
fn idling_never_helps_the_discarding_adversary() {
    let c = BackboneConfig::new(9, 3, 0.02, 51, 3);
    let busy = window_counts(&run_many(&c, &dd(None, None), 2000, 21).unwrap());
    let idle = window_counts(&run_many(&c, &dd(None, Some(2)), 2000, 21).unwrap());
    let (mb, sb) = mean_and_se(&busy);
    let (mi, si) = mean_and_se(&idle);
    assert!(mi <= mb + 2.0 * (sb * sb + si * si).sqrt(), "idle {mi} busy {mb}");
}

#[test]
fn withholding_forks_at_least_as_often_as_mimicking() {
    let c = BackboneConfig::new(9, 3, 0.02, 51, 3);
    let ks = [1, 3, 6];
    let withhold = common_prefix_violation_rates(
        &c,
        &StrategySpec::Withhold {
            release: Release::Override,
            abandon_gap: 24,
        },
        &ks,
        2000,
        5,
    )
    .unwrap();
    let mimic = common_prefix_violation_rates(&c, &StrategySpec::HonestMimic, &ks, 2000, 5).unwrap();
    for (w, m) in withhold.iter().zip(&mimic) {
        assert!(w >= m, "{withhold:?} vs {mimic:?}");
    }
}

#[test]
fn no_adversary_single_party_never_violates_prefix() {
    let c = BackboneConfig::new(1, 0, 0.2, 31, 3);
    for k in [1, 3, 6, 12] {
        assert_eq!(
            common_prefix_violation_rate(&c, &StrategySpec::HonestMimic, k, 200, 1).unwrap(),
            0.0
        );
    }
}

#[test]
fn quality_improves_as_lambda_grows() {
    // Fewer corrupted parties out of a fixed pool raises λ; the mean
    // worst-window quality should follow, staying near 1 − 1/λ or above.
    let window = 20;
    let mut last = 0.0;
    for t in [4usize, 3, 2, 1] {
        let c = BackboneConfig::new(12, t, 0.015, 101, 3);
        let runs = run_many(&c, &StrategySpec::HonestMimic, 300, 2).unwrap();
        let qs: Vec<f64> = runs
            .iter()
            .map(|o| chain_quality(o.output_chain.as_ref().unwrap(), window).unwrap())
            .collect();
        let (q, _) = mean_and_se(&qs);
        assert!(q > last, "t={t}: {q} after {last}");
        assert!(q >= 1.0 - 2.0 / c.lambda(), "t={t}: {q} vs lambda {}", c.lambda());
        last = q;
    }
}

#[test]
fn block_supply_tail_decays() {
    let c = BackboneConfig::new(9, 3, 0.02, 21, 3);
    let runs = run_many(&c, &StrategySpec::PrivateChain { supply_rounds: 60 }, 3000, 9).unwrap();
    let supply: Vec<u64> = runs.iter().map(|o| o.graft.unwrap().len).collect();
    let tail = |ell: u64| supply.iter().filter(|&&s| s > ell).count();
    let tails: Vec<usize> = (0..8).map(tail).collect();
    assert!(tails.windows(2).all(|w| w[0] >= w[1]), "{tails:?}");
    assert!(tails[1] > tails[5] && tails[5] > tails[7], "{tails:?}");
}

#[test]
fn grafted_window_quality_with_small_beta() {
    let c = BackboneConfig::new(20, 1, 0.01, 41, 3);
    let big_l = 30;
    let runs = run_many(&c, &StrategySpec::PrivateChain { supply_rounds: 40 }, 300, 4).unwrap();
    let mut checked = 0;
    let mut within = 0;
    for o in &runs {
        let g = o.graft.unwrap();
        let chain = o.output_chain.as_ref().unwrap();
        let Some(pos) = chain.position(g.first) else { continue };
        if pos + big_l > chain.len() {
            continue;
        }
        // Besides the graft only a β-sized trickle lands in the window.
        let ell = g.len as usize + 4;
        let adv = chain.adversarial[pos..pos + big_l].iter().filter(|&&a| a).count();
        let quality = 1.0 - adv as f64 / big_l as f64;
        within += (quality >= 1.0 - ell as f64 / big_l as f64) as usize;
        checked += 1;
    }
    assert!(checked > 100);
    assert!(within as f64 >= 0.9 * checked as f64, "{within}/{checked}");
}

#[test]
fn small_budget_discarding_bias_stays_under_extractor_bound() {
    let mut c = BackboneConfig::new(9, 3, 0.02, 51, 3);
    c.watch = None;
    let budget = BudgetConfig {
        reserve: 30.0,
        reward: 20.0,
        cost_per_query: 1.0,
    };
    let trials = 4000;
    let (report, timeouts) = estimate_backbone_bias(&c, &dd(Some(budget), None), trials, 12, 0.95).unwrap();
    assert_eq!(timeouts, 0);
    let (ell, _) = c.upbound2(0.5).unwrap();
    let bound = worst_case_majority_bias(c.n, ell).unwrap().to_f64().unwrap();
    let hw = hoeffding_halfwidth(trials, 0.95).unwrap();
    assert!(report.estimate <= bound + hw, "{} vs {bound}", report.estimate);
}

#[test]
fn agreement_improves_with_confirmation_depth() {
    let spec = StrategySpec::Withhold {
        release: Release::Override,
        abandon_gap: 24,
    };
    let mut rates = Vec::new();
    for k in [0u64, 4, 12] {
        let c = BackboneConfig::new(9, 3, 0.02, 21, k);
        let runs = run_many(&c, &spec, 1000, 3).unwrap();
        rates.push(runs.iter().filter(|o| o.agreement).count() as f64 / 1000.0);
    }
    assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");
    assert!(rates[2] > 0.97, "{rates:?}");
}
