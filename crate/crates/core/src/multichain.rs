//! Beacon over two chains: majority of `m` block LSBs from chain A and `w`
//! from chain B. B's coin is worth `1/c1` of A's and the same equipment
//! buys `c2` times the relative mining power there.
//!
//! All money amounts are in chain-A value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractors::majority;
use crate::forkless::{run_forkless_summary, ForklessConfig, ForklessRun, TwoModePolicy};
use crate::rng::{rng_from_seed, SimRng};
use crate::stats::{map_trials, BiasReport, BitTally};

fn default_interval_ratio() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiChainConfig {
    pub m: usize,
    pub w: usize,
    /// Purchasing power of A's coin over B's.
    pub c1: f64,
    /// Security ratio: power `p` on A buys `c2·p` on B.
    pub c2: f64,
    /// Chain-B blocks per chain-A block interval.
    #[serde(default = "default_interval_ratio")]
    pub interval_ratio: f64,
    /// Treat block rewards and mining costs as negligible; the budget never
    /// binds and only forgone rewards are counted.
    #[serde(default)]
    pub zero_profit_mode: bool,
    /// Chain-A parameters; `n` is replaced by `m`.
    pub chain: ForklessConfig,
}

impl MultiChainRun {
    pub fn forgone(&self) -> f64 {
        self.forgone_a + self.forgone_b
    }
}

impl MultiChainConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.m == 0 {
            v.push(("m", "must be at least 1".to_string()));
        }
        if (self.m + self.w) % 2 == 0 {
            v.push(("w", format!("m + w = {} must be odd", self.m + self.w)));
        }
        if !(self.c1 >= 1.0) {
            v.push(("c1", format!("{} < 1", self.c1)));
        }
        if !(self.c2 >= 1.0) {
            v.push(("c2", format!("{} < 1", self.c2)));
        }
        if !(self.interval_ratio > 0.0) {
            v.push(("interval_ratio", format!("{} must be positive", self.interval_ratio)));
        }
        for (name, reason) in self.chain.violations() {
            if name != "n" {
                v.push((name, reason));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }

    /// Adversary power on B, clamped to 1.
    pub fn p_b(&self) -> f64 {
        (self.c2 * self.chain.p).min(1.0)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.c2 * self.chain.p >= 1.0 {
            w.push(format!(
                "c2*p = {} >= 1: chain-B adversary saturated at p = 1",
                self.c2 * self.chain.p
            ));
        }
        w
    }

    pub fn chain_a(&self) -> ForklessConfig {
        let mut a = self.chain.clone();
        a.n = self.m;
        if self.zero_profit_mode {
            a.x = 0.0;
            a.y_p = 0.0;
        }
        a
    }

    /// Chain B: power `min(c2·p, 1)`, reward and per-attempt cost scaled by
    /// `1/c1`.
    pub fn chain_b(&self) -> ForklessConfig {
        let mut b = self.chain_a();
        b.n = self.w;
        b.p = self.p_b();
        b.x /= self.c1;
        b.y_p /= self.c1;
        b
    }
}

/// `round((c1/c2)·m)`: about as costly to bias as the `m` blocks of A.
pub fn choose_w(c1: f64, c2: f64, m: usize) -> Result<usize> {
    if !(c1 >= 1.0 && c2 >= 1.0) {
        return Err(Error::invalid("c1", format!("need c1, c2 >= 1, got {c1}, {c2}")));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    Ok((c1 / c2 * m as f64).round() as usize)
}

/// [`choose_w`] plus one when `m + w` would be even, so the majority is
/// defined.
pub fn majority_w(c1: f64, c2: f64, m: usize) -> Result<usize> {
    let w = choose_w(c1, c2, m)?;
    Ok(if (m + w) % 2 == 0 { w + 1 } else { w })
}

/// The final majority over all inputs; order does not matter.
pub fn combined_bit(lsbs: &[u8]) -> Result<u8> {
    majority(lsbs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChainRun {
    pub bit: u8,
    pub lsbs_a: Vec<u8>,
    pub lsbs_b: Vec<u8>,
    /// Rewards the adversary gave up by discarding blocks, per chain.
    pub forgone_a: f64,
    pub forgone_b: f64,
    pub turns_a: u64,
    pub turns_b: u64,
    /// In chain-A turns: B runs `interval_ratio` turns per A turn.
    pub duration: f64,
}

fn run_chain(cfg: &ForklessConfig, policy: &TwoModePolicy, rng: &mut SimRng) -> Option<ForklessRun> {
    (cfg.n > 0).then(|| run_forkless_summary(cfg, policy, rng))
}

pub fn run_multichain_with(
    cfg: &MultiChainConfig,
    policy_a: &TwoModePolicy,
    policy_b: &TwoModePolicy,
    rng: &mut SimRng,
) -> Result<MultiChainRun> {
    cfg.validate()?;
    let a = run_chain(&cfg.chain_a(), policy_a, rng).expect("m >= 1");
    let b = run_chain(&cfg.chain_b(), policy_b, rng);
    let (lsbs_b, turns_b, discarded_b) = match b {
        Some(b) => (b.bits, b.turns, b.discarded),
        None => (Vec::new(), 0, 0),
    };
    let mut all = a.bits.clone();
    all.extend(&lsbs_b);
    Ok(MultiChainRun {
        bit: combined_bit(&all)?,
        forgone_a: cfg.chain.x * a.discarded as f64,
        forgone_b: cfg.chain.x / cfg.c1 * discarded_b as f64,
        duration: (a.turns as f64).max(turns_b as f64 / cfg.interval_ratio),
        lsbs_a: a.bits,
        lsbs_b,
        turns_a: a.turns,
        turns_b,
    })
}

/// The two chains draw from one stream, A first.
pub fn run_multichain_beacon(
    cfg: &MultiChainConfig,
    policy_a: &TwoModePolicy,
    policy_b: &TwoModePolicy,
    seed: u64,
) -> Result<MultiChainRun> {
    run_multichain_with(cfg, policy_a, policy_b, &mut rng_from_seed(seed))
}

/// Bias estimate together with the mean forgone rewards per run.
pub fn estimate_multichain(
    cfg: &MultiChainConfig,
    policy_a: &TwoModePolicy,
    policy_b: &TwoModePolicy,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Result<(BiasReport, f64)> {
    cfg.validate()?;
    let runs = map_trials(trials, seed, |rng, _| {
        let r = run_multichain_with(cfg, policy_a, policy_b, rng).expect("validated");
        (r.bit, r.forgone())
    });
    let mut tally = BitTally::default();
    let mut forgone = 0.0;
    for (bit, f) in &runs {
        tally.record(*bit);
        forgone += f;
    }
    let report = BiasReport::from_tally(tally, seed, confidence)?;
    Ok((report, forgone / trials.max(1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forkless::{two_mode_policy, Schedule};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

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
    fn choose_w_examples() {
        for m in [5, 10, 25] {
            assert_eq!(choose_w(100.0, 50.0, m).unwrap(), 2 * m);
        }
        assert_eq!(majority_w(100.0, 50.0, 10).unwrap(), 21);
        assert_eq!(majority_w(100.0, 50.0, 5).unwrap(), 10);
        assert_eq!(choose_w(3.0, 2.0, 10).unwrap(), 15);
        assert_eq!(majority_w(3.0, 2.0, 10).unwrap(), 15);
        assert_eq!(choose_w(7.0, 7.0, 10).unwrap(), 10);
        assert_eq!(majority_w(7.0, 7.0, 10).unwrap(), 11);
        assert_eq!(majority_w(7.0, 7.0, 9).unwrap(), 10);
        assert!(choose_w(0.5, 1.0, 3).is_err());
        assert!(choose_w(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn choose_w_ratio_converges() {
        for (c1, c2) in [(3.0, 2.0), (100.0, 50.0), (5.0, 3.0), (1.0, 1.0)] {
            let err = |m: usize| (choose_w(c1, c2, m).unwrap() as f64 / m as f64 - c1 / c2).abs();
            assert!(err(1_000_000) < 1e-6);
            assert!(err(10_000) <= 0.5 / 10_000.0 + 1e-12);
        }
    }

    #[test]
    fn combined_bit_ignores_order() {
        let mut rng = rng_from_seed(6);
        for _ in 0..1000 {
            let n = 2 * rng.random_range(0..30) + 1;
            let mut bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let before = combined_bit(&bits).unwrap();
            bits.shuffle(&mut rng);
            assert_eq!(combined_bit(&bits).unwrap(), before);
        }
    }

    proptest! {
        #[test]
        fn output_is_majority_of_both_chains(seed in any::<u64>(), m in 1usize..15, w in 0usize..15) {
            let w = if (m + w) % 2 == 0 { w + 1 } else { w };
            let c = cfg(m, w, 0.2);
            let honest = two_mode_policy(Schedule::AlwaysFilter);
            let r = run_multichain_beacon(&c, &honest, &honest, seed).unwrap();
            prop_assert_eq!(r.lsbs_a.len(), m);
            prop_assert_eq!(r.lsbs_b.len(), w);
            let ones = r.lsbs_a.iter().chain(&r.lsbs_b).filter(|&&b| b == 1).count();
            prop_assert_eq!(r.bit, (2 * ones > m + w) as u8);
            prop_assert!(r.duration >= r.turns_a as f64);
        }
    }

    #[test]
    fn idle_adversaries_are_unbiased() {
        let c = cfg(11, 20, 0.0);
        let idle = two_mode_policy(Schedule::AlwaysHonest);
        let (report, forgone) = estimate_multichain(&c, &idle, &idle, 20_000, 3, 0.99).unwrap();
        assert!(report.estimate < report.ci_halfwidth, "{report:?}");
        assert_eq!(forgone, 0.0);
    }

    #[test]
    fn saturation_warns_and_clamps() {
        let c = cfg(5, 10, 0.6);
        assert_eq!(c.p_b(), 1.0);
        assert_eq!(c.warnings().len(), 1);
        assert!(cfg(5, 10, 0.2).warnings().is_empty());
        let filter = two_mode_policy(Schedule::AlwaysFilter);
        let r = run_multichain_beacon(&c, &filter, &filter, 1).unwrap();
        assert!(r.lsbs_b.iter().all(|&b| b == 1));
    }

    #[test]
    fn chain_b_scaling() {
        let mut c = cfg(5, 10, 0.2);
        c.zero_profit_mode = false;
        let b = c.chain_b();
        assert_eq!(b.n, 10);
        assert!((b.p - 0.4).abs() < 1e-12);
        assert_eq!(b.x, 50.0 / 4.0);
        assert_eq!(b.y_p, 9.0 / 4.0);
        c.zero_profit_mode = true;
        assert_eq!(c.chain_b().x, 0.0);
    }

    #[test]
    fn violations_listed() {
        let mut c = cfg(4, 4, 0.2);
        c.c1 = 0.5;
        c.chain.x = -1.0;
        let names: Vec<_> = c.violations().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["w", "c1", "x"]);
    }
}
