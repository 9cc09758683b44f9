use beacon_lab::forkless::{two_mode_policy, ForklessConfig, Schedule};
use beacon_lab::multichain::*;
use beacon_lab::stats::{map_trials, mean_and_se};

fn cfg(m: usize, w: usize, p: f64) -> MultiChainConfig {
    let mut chain = ForklessConfig::exemplary(m, 0.1, 3.0, 9.0);
    chain.p = p;
    MultiChainConfig {
        m,
        w,
        c1: 4.0,
        c2: 2.0,
        interval_ratio: 4.0,
        zero_profit_mode: true,
        chain,
    }
}

#[test]
fn balanced_w_equalizes_the_cost_of_both_portions() {
    // Expected forgone value x·m·p'(p) on A against (x/c1)·w·p'(c2·p) on B.
    let filter = two_mode_policy(Schedule::AlwaysFilter);
    let m = 25;
    let w = choose_w(4.0, 2.0, m).unwrap();
    let c = cfg(m, w, 0.05);
    let runs = map_trials(20_000, 8, |rng, _| {
        let r = run_multichain_with(&c, &filter, &filter, rng).unwrap();
        (r.forgone_a, r.forgone_b)
    });
    let (a, sa) = mean_and_se(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let (b, sb) = mean_and_se(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    let p_prime = |p: f64| (p / 2.0) / (1.0 - p / 2.0);
    let expect_a = 50.0 * m as f64 * p_prime(0.05);
    let expect_b = 50.0 / 4.0 * w as f64 * p_prime(0.1);
    assert!((a - expect_a).abs() < 4.0 * sa, "{a} vs {expect_a}");
    assert!((b - expect_b).abs() < 4.0 * sb, "{b} vs {expect_b}");
    assert!((a / b - 1.0).abs() < 0.1, "{a} vs {b}");
}

#[test]
fn filtering_both_chains_biases_toward_one() {
    let filter = two_mode_policy(Schedule::AlwaysFilter);
    let honest = two_mode_policy(Schedule::AlwaysHonest);
    let c = cfg(25, 50, 0.1);
    let (both, _) = estimate_multichain(&c, &filter, &filter, 10_000, 2, 0.95).unwrap();
    let (only_a, _) = estimate_multichain(&c, &filter, &honest, 10_000, 2, 0.95).unwrap();
    assert!(2 * both.zeros < both.trials && 2 * only_a.zeros < only_a.trials);
    assert!(both.estimate > only_a.estimate + both.ci_halfwidth);
}

#[test]
fn duration_counts_chain_b_in_a_intervals() {
    let idle = two_mode_policy(Schedule::AlwaysHonest);
    let mut c = cfg(5, 40, 0.0);
    for ratio in [1.0, 4.0, 16.0] {
        c.interval_ratio = ratio;
        let r = run_multichain_beacon(&c, &idle, &idle, 3).unwrap();
        assert_eq!(r.duration, (r.turns_a as f64).max(r.turns_b as f64 / ratio));
    }
}
