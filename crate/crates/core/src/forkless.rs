//! Turn-based forkless mining model with a budget-limited adversary who
//! biases a majority-of-LSBs beacon toward 1.
//!
//! Each turn the adversary succeeds with probability `p` and may publish or
//! discard her block; otherwise the chain grows by a uniform honest block.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution as _, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractors::{majority, raw_ell};
use crate::rng::{rng_from_seed, SimRng};
use crate::stats::{map_trials, run_trials, BiasReport, BitTally, Count};

/// When the adversary pays for a mining attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeMode {
    /// `y_p` every turn the adversary mines, including retries at the same
    /// location after a discard.
    #[default]
    PerTurn,
    /// `y_p` once per chain location she mines at.
    PerLocation,
}

fn default_d() -> u32 {
    1 << 16
}

fn default_cap() -> Option<f64> {
    Some(2.0)
}

fn default_delta() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForklessConfig {
    /// Adversary success probability per turn.
    pub p: f64,
    #[serde(default = "default_d")]
    pub d: u32,
    /// Beacon length (odd).
    pub n: usize,
    /// Reward per accepted block.
    pub x: f64,
    /// Cost per mining attempt.
    pub y_p: f64,
    /// Coins invested in mining power.
    pub t1: f64,
    /// Coin reserve at the start.
    pub t2: f64,
    /// `c` in `maxprofits(t, i) = min(c·t, r·i)`; `None` removes the cap.
    #[serde(default = "default_cap")]
    pub maxprofits_cap: Option<f64>,
    /// `r` in the same formula; defaults to `z_p`.
    #[serde(default)]
    pub profit_rate: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub charge: ChargeMode,
    /// Ignore the budget entirely: no bankruptcy and no profit cap.
    #[serde(default)]
    pub unlimited_budget: bool,
}

impl ForklessConfig {
    /// The exemplary numbers `p = 1/5, x = 50, y_p = 9, δ = 2/3`.
    pub fn exemplary(n: usize, epsilon: f64, t1: f64, t2: f64) -> Self {
        ForklessConfig {
            p: 0.2,
            d: default_d(),
            n,
            x: 50.0,
            y_p: 9.0,
            t1,
            t2,
            maxprofits_cap: default_cap(),
            profit_rate: None,
            delta: default_delta(),
            epsilon,
            charge: ChargeMode::PerTurn,
            unlimited_budget: false,
        }
    }

    /// Every violated constraint, one message per field.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if !(self.p >= 0.0 && self.p < 1.0) {
            v.push(("p", format!("{} is not in [0, 1)", self.p)));
        }
        if self.d < 2 || self.d % 2 != 0 {
            v.push(("d", format!("{} must be even and at least 2", self.d)));
        }
        if self.n == 0 || self.n % 2 == 0 {
            v.push(("n", format!("{} must be odd", self.n)));
        }
        if !(self.x >= 0.0) {
            v.push(("x", format!("{} must be non-negative", self.x)));
        }
        if !(self.y_p >= 0.0) {
            v.push(("y_p", format!("{} must be non-negative", self.y_p)));
        }
        if !(self.t1 >= 0.0) {
            v.push(("t1", format!("{} must be non-negative", self.t1)));
        }
        if !(self.t2 >= 0.0) {
            v.push(("t2", format!("{} must be non-negative", self.t2)));
        }
        if let Some(c) = self.maxprofits_cap {
            if !(c >= 0.0) {
                v.push(("maxprofits_cap", format!("{c} must be non-negative")));
            }
        }
        if let Some(r) = self.profit_rate {
            if !(r >= 0.0) {
                v.push(("profit_rate", format!("{r} must be non-negative")));
            }
        }
        if !(self.delta > 0.5 && self.delta < 1.0) {
            v.push(("delta", format!("{} is not in (1/2, 1)", self.delta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= E / PI) {
            v.push(("epsilon", format!("{} is not in [0, e/pi]", self.epsilon)));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }

    /// `p' = (p/2)/(1 − p/2)`, the per-location success rate when filtering.
    pub fn p_prime(&self) -> f64 {
        p_prime(self.p)
    }

    /// Honest profit margin `z_p = p·x − y_p`.
    pub fn z_p(&self) -> f64 {
        self.p * self.x - self.y_p
    }

    /// Filtering margin `w_p = (1/δ)·p'·x − y_p`.
    pub fn w_p(&self) -> f64 {
        self.p_prime() * self.x / self.delta - self.y_p
    }

    pub fn profit_rate(&self) -> f64 {
        self.profit_rate.unwrap_or_else(|| self.z_p().max(0.0))
    }

    /// `maxprofits(t1, i) = min(c·t1, r·i)`, or `r·i` without a cap.
    pub fn maxprofits(&self, i: usize) -> f64 {
        maxprofits(self.maxprofits_cap, self.profit_rate(), self.t1, i)
    }

    /// `T(i) = t2 + maxprofits(t1, i)`.
    pub fn budget(&self, i: usize) -> f64 {
        self.t2 + self.maxprofits(i)
    }
}

pub fn p_prime(p: f64) -> f64 {
    (p / 2.0) / (1.0 - p / 2.0)
}

pub fn maxprofits(cap: Option<f64>, rate: f64, t: f64, i: usize) -> f64 {
    let linear = rate * i as f64;
    match cap {
        Some(c) => linear.min(c * t),
        None => linear,
    }
}

/// Coin accounting for the adversary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub initial: f64,
    pub coins: f64,
    pub earned: f64,
    pub spent: f64,
    /// Net profit collected while playing honestly, which the profit cap
    /// bounds.
    pub honest_net: f64,
    pub bankrupt: bool,
    pub unlimited: bool,
}

impl BudgetLedger {
    pub fn new(initial: f64, unlimited: bool) -> Self {
        BudgetLedger {
            initial,
            coins: initial,
            earned: 0.0,
            spent: 0.0,
            honest_net: 0.0,
            bankrupt: false,
            unlimited,
        }
    }

    /// Tries to pay for one attempt. Sets the bankrupt flag and refuses if
    /// the balance cannot cover it.
    pub fn try_charge(&mut self, cost: f64, honest: bool) -> bool {
        if self.bankrupt {
            return false;
        }
        if !self.unlimited && self.coins < cost {
            self.bankrupt = true;
            return false;
        }
        self.coins -= cost;
        self.spent += cost;
        if honest {
            self.honest_net -= cost;
        }
        true
    }

    /// Credits a block reward. In honest mode the credit is cut so that net
    /// honest profit stays within `cap`.
    pub fn credit(&mut self, reward: f64, honest: bool, cap: f64) -> f64 {
        if self.bankrupt {
            return 0.0;
        }
        let amount = if honest && !self.unlimited {
            reward.min((cap - self.honest_net).max(0.0))
        } else {
            reward
        };
        self.coins += amount;
        self.earned += amount;
        if honest {
            self.honest_net += amount;
        }
        amount
    }

    /// `coins = initial + earned − spent`, to rounding.
    pub fn is_conserved(&self) -> bool {
        let expect = self.initial + self.earned - self.spent;
        (self.coins - expect).abs() <= 1e-9 * (1.0 + expect.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Publisher {
    Honest,
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    HonestMode,
    FilterMode,
    IdleBankrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn: u64,
    pub adversary_successful: bool,
    /// Symbol appended to the chain, or the discarded symbol.
    pub block_symbol: u32,
    /// `None` when the block was discarded.
    pub published_by: Option<Publisher>,
    pub adversary_mode: AdversaryMode,
    pub discarded: bool,
}

/// When the adversary stops mining honestly and starts filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Schedule {
    AlwaysHonest,
    AlwaysFilter,
    /// Honest while the chain is shorter than the given height.
    HonestUntilHeight(usize),
    /// Honest until net honest profit reaches the cap `c·t1`.
    HonestUntilCapExhausted,
}

/// Two-mode adversary: honest mining (publish everything) or filtering
/// (publish only blocks with LSB 1). The mode is re-evaluated only when a
/// new chain location starts, never between a discard and the retry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModePolicy {
    pub schedule: Schedule,
}

pub fn two_mode_policy(schedule: Schedule) -> TwoModePolicy {
    TwoModePolicy { schedule }
}

impl TwoModePolicy {
    fn mode_at(&self, cfg: &ForklessConfig, height: usize, ledger: &BudgetLedger) -> AdversaryMode {
        let filter = match self.schedule {
            Schedule::AlwaysHonest => false,
            Schedule::AlwaysFilter => true,
            Schedule::HonestUntilHeight(h) => height >= h,
            Schedule::HonestUntilCapExhausted => match cfg.maxprofits_cap {
                Some(c) if !cfg.unlimited_budget => ledger.honest_net >= c * cfg.t1,
                _ => false,
            },
        };
        if filter {
            AdversaryMode::FilterMode
        } else {
            AdversaryMode::HonestMode
        }
    }
}

/// Simulation state between turns.
#[derive(Debug, Clone)]
pub struct ForklessState {
    pub chain: Vec<u32>,
    pub publishers: Vec<Publisher>,
    pub ledger: BudgetLedger,
    pub turn: u64,
    mode: AdversaryMode,
    location_charged: bool,
    /// Adversary blocks published while filtering.
    pub marked: usize,
    pub discarded: usize,
}

impl ForklessState {
    pub fn new(cfg: &ForklessConfig, policy: &TwoModePolicy) -> Self {
        let ledger = BudgetLedger::new(cfg.t2, cfg.unlimited_budget);
        let mode = policy.mode_at(cfg, 0, &ledger);
        ForklessState {
            chain: Vec::with_capacity(cfg.n),
            publishers: Vec::with_capacity(cfg.n),
            ledger,
            turn: 0,
            mode,
            location_charged: false,
            marked: 0,
            discarded: 0,
        }
    }

    pub fn mode(&self) -> AdversaryMode {
        self.mode
    }
}

/// Plays one turn.
pub fn step(
    cfg: &ForklessConfig,
    policy: &TwoModePolicy,
    state: &mut ForklessState,
    rng: &mut SimRng,
) -> TurnTrace {
    let turn = state.turn;
    state.turn += 1;

    let mut mode = state.mode;
    if mode != AdversaryMode::IdleBankrupt && cfg.p > 0.0 {
        let honest = mode == AdversaryMode::HonestMode;
        let must_pay = match cfg.charge {
            ChargeMode::PerTurn => true,
            ChargeMode::PerLocation => !state.location_charged,
        };
        if must_pay {
            if state.ledger.try_charge(cfg.y_p, honest) {
                state.location_charged = true;
            } else {
                mode = AdversaryMode::IdleBankrupt;
                state.mode = mode;
            }
        }
    }

    let mining = mode != AdversaryMode::IdleBankrupt && cfg.p > 0.0;
    let success = mining && rng.random::<f64>() < cfg.p;
    let symbol = rng.random_range(0..cfg.d);
    let mut trace = TurnTrace {
        turn,
        adversary_successful: success,
        block_symbol: symbol,
        published_by: Some(Publisher::Honest),
        adversary_mode: mode,
        discarded: false,
    };

    if success {
        let helpful = symbol & 1 == 1;
        if mode == AdversaryMode::FilterMode && !helpful {
            trace.published_by = None;
            trace.discarded = true;
            state.discarded += 1;
            return trace;
        }
        let honest = mode == AdversaryMode::HonestMode;
        let cap = cfg.maxprofits(state.chain.len() + 1);
        state.ledger.credit(cfg.x, honest, cap);
        if !honest {
            state.marked += 1;
        }
        trace.published_by = Some(Publisher::Adversary);
    }

    state.chain.push(symbol);
    state
        .publishers
        .push(trace.published_by.unwrap_or(Publisher::Honest));
    state.location_charged = false;
    if state.mode != AdversaryMode::IdleBankrupt {
        state.mode = policy.mode_at(cfg, state.chain.len(), &state.ledger);
    }
    trace
}

/// Outcome of one beacon execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForklessRun {
    pub bit: u8,
    /// LSBs of the `n` chain blocks.
    pub bits: Vec<u8>,
    pub ledger: BudgetLedger,
    pub marked: usize,
    pub adversary_blocks: usize,
    /// Adversary blocks thrown away while filtering.
    pub discarded: usize,
    pub turns: u64,
    /// Chain height at which the adversary went bankrupt, if she did.
    pub bankrupt_at: Option<usize>,
    pub trace: Vec<TurnTrace>,
}

fn simulate(
    cfg: &ForklessConfig,
    policy: &TwoModePolicy,
    rng: &mut SimRng,
    keep_trace: bool,
) -> ForklessRun {
    let mut state = ForklessState::new(cfg, policy);
    let mut trace = Vec::new();
    let mut bankrupt_at = None;
    while state.chain.len() < cfg.n {
        let t = step(cfg, policy, &mut state, rng);
        if bankrupt_at.is_none() && state.ledger.bankrupt {
            bankrupt_at = Some(state.chain.len());
        }
        if keep_trace {
            trace.push(t);
        }
    }
    let bits: Vec<u8> = state.chain.iter().map(|&s| (s & 1) as u8).collect();
    ForklessRun {
        // Even lengths only occur as one part of a larger majority.
        bit: if bits.len() % 2 == 1 { majority(&bits).expect("odd") } else { 0 },
        discarded: state.discarded,
        bits,
        adversary_blocks: state
            .publishers
            .iter()
            .filter(|&&p| p == Publisher::Adversary)
            .count(),
        marked: state.marked,
        turns: state.turn,
        bankrupt_at,
        ledger: state.ledger,
        trace,
    }
}

/// Runs turns until `n` blocks exist and outputs the majority of their LSBs.
pub fn run_forkless_beacon(
    cfg: &ForklessConfig,
    policy: &TwoModePolicy,
    seed: u64,
) -> Result<ForklessRun> {
    cfg.validate()?;
    Ok(simulate(cfg, policy, &mut rng_from_seed(seed), true))
}

/// Same as [`run_forkless_beacon`] on a caller-supplied stream, without the
/// per-turn trace.
pub fn run_forkless_summary(cfg: &ForklessConfig, policy: &TwoModePolicy, rng: &mut SimRng) -> ForklessRun {
    simulate(cfg, policy, rng, false)
}

/// Monte Carlo `|Pr(bit = 1) − ½|` over `trials` independent runs.
pub fn estimate_forkless_bias(
    cfg: &ForklessConfig,
    policy: &TwoModePolicy,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Result<BiasReport> {
    cfg.validate()?;
    let tally: BitTally = run_trials(trials, seed, |rng, _| {
        BitTally::of(run_forkless_summary(cfg, policy, rng).bit)
    });
    BiasReport::from_tally(tally, seed, confidence)
}

/// Fraction of runs in which the adversary got at most `ell` marked blocks.
pub fn estimate_marked_at_most(
    cfg: &ForklessConfig,
    policy: &TwoModePolicy,
    ell: usize,
    trials: u64,
    seed: u64,
) -> Count {
    run_trials(trials, seed, |rng, _| {
        Count::of(run_forkless_summary(cfg, policy, rng).marked <= ell)
    })
}

/// `exp(−(1/3)(1/δ − 1)²·δ·ℓ)`.
pub fn negbin_tail(delta: f64, ell: f64, p_prime: f64) -> Result<f64> {
    if !(delta > 0.5 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("{delta} is not in (1/2, 1)")));
    }
    if !(p_prime > 0.0 && p_prime < 1.0) {
        return Err(Error::invalid("p_prime", format!("{p_prime} is not in (0, 1)")));
    }
    if ell < 0.0 {
        return Err(Error::invalid("ell", format!("{ell} is negative")));
    }
    Ok(p0(delta, ell))
}

fn p0(delta: f64, ell: f64) -> f64 {
    (-(1.0 / 3.0) * (1.0 / delta - 1.0).powi(2) * delta * ell).exp()
}

/// Monte Carlo `Pr(Y < δ·ℓ/p')` where `Y` counts trials until the `ℓ`-th
/// success at rate `p'`.
pub fn negbin_tail_monte_carlo(
    delta: f64,
    ell: u64,
    p_prime: f64,
    trials: u64,
    seed: u64,
) -> Result<Count> {
    negbin_tail(delta, ell as f64, p_prime)?;
    let geo = Geometric::new(p_prime).map_err(|e| Error::invalid("p_prime", e.to_string()))?;
    let threshold = delta * ell as f64 / p_prime;
    Ok(run_trials(trials, seed, |rng, _| {
        let failures: u64 = (0..ell).map(|_| geo.sample(rng)).sum();
        Count::of(((ell + failures) as f64) < threshold)
    }))
}

/// `ε + p₀ + (e/π)/√(n − ℓ)`.
pub fn upbound1_formula(epsilon: f64, n: usize, ell: u64, delta: f64) -> f64 {
    epsilon + p0(delta, ell as f64) + E / PI / ((n as f64) - ell as f64).sqrt()
}

/// The forkless bias bound with `ℓ = ⌊ε(π/e)√(n−√n)⌋`. Fails when the margin
/// hypotheses or the budget condition `T(n) + δ(1/p')ℓ·w_p < 0` do not hold.
pub fn upbound1_bias_bound(cfg: &ForklessConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.z_p() <= 0.0 {
        return Err(Error::BoundNotApplicable(format!("z_p = {} is not positive", cfg.z_p())));
    }
    if cfg.w_p() >= 0.0 {
        return Err(Error::BoundNotApplicable(format!("w_p = {} is not negative", cfg.w_p())));
    }
    let ell = raw_ell(cfg.n as u64, cfg.epsilon)?;
    let lhs = budget_condition_lhs(cfg, ell);
    if lhs >= 0.0 {
        return Err(Error::BoundNotApplicable(format!(
            "T(n) + delta*ell*w_p/p' = {lhs} is not negative"
        )));
    }
    Ok(upbound1_formula(cfg.epsilon, cfg.n, ell, cfg.delta))
}

/// `T(n) + δ·(1/p')·ℓ·w_p`.
pub fn budget_condition_lhs(cfg: &ForklessConfig, ell: u64) -> f64 {
    cfg.budget(cfg.n) + cfg.delta / cfg.p_prime() * ell as f64 * cfg.w_p()
}

/// Per-location landing rate of filtered adversary blocks, from runs with an
/// unlimited budget.
pub fn filter_landing_rate(p: f64, locations: usize, trials: u64, seed: u64) -> Count {
    let cfg = ForklessConfig {
        p,
        d: 2,
        n: if locations % 2 == 1 { locations } else { locations + 1 },
        x: 0.0,
        y_p: 0.0,
        t1: 0.0,
        t2: 0.0,
        maxprofits_cap: None,
        profit_rate: Some(0.0),
        delta: default_delta(),
        epsilon: 0.0,
        charge: ChargeMode::PerTurn,
        unlimited_budget: true,
    };
    let policy = two_mode_policy(Schedule::AlwaysFilter);
    let counts = map_trials(trials, seed, |rng, _| {
        let r = run_forkless_summary(&cfg, &policy, rng);
        (r.adversary_blocks as u64, cfg.n as u64)
    });
    counts.into_iter().fold(Count::default(), |acc, (h, n)| Count {
        hits: acc.hits + h,
        trials: acc.trials + n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(p: f64) -> ForklessConfig {
        ForklessConfig::exemplary(101, 0.1, 5.0, 5.0).with_p(p)
    }

    impl ForklessConfig {
        fn with_p(mut self, p: f64) -> Self {
            self.p = p;
            self
        }
    }

    #[test]
    fn exemplary_margins() {
        let c = ForklessConfig::exemplary(2001, 0.1, 5.0, 5.0);
        assert!((c.z_p() - 1.0).abs() < 1e-12);
        assert!((c.p_prime() - 1.0 / 9.0).abs() < 1e-12);
        assert!((c.w_p() + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_p_never_touches_the_ledger() {
        let c = cfg(0.0);
        let policy = two_mode_policy(Schedule::AlwaysFilter);
        let r = run_forkless_beacon(&c, &policy, 3).unwrap();
        assert_eq!(r.adversary_blocks, 0);
        assert_eq!(r.ledger.spent, 0.0);
        assert_eq!(r.ledger.earned, 0.0);
        assert_eq!(r.turns, 101);
    }

    #[test]
    fn certain_success_drifts_by_margin() {
        // p = 1 is outside the model's open interval, so drive step directly.
        let mut c = cfg(0.2);
        c.p = 1.0;
        c.t2 = 10.0;
        c.maxprofits_cap = None;
        c.profit_rate = Some(f64::INFINITY);
        let policy = two_mode_policy(Schedule::AlwaysHonest);
        let mut s = ForklessState::new(&c, &policy);
        let mut rng = rng_from_seed(1);
        for _ in 0..10 {
            let t = step(&c, &policy, &mut s, &mut rng);
            assert_eq!(t.published_by, Some(Publisher::Adversary));
        }
        let margin = c.x - c.y_p;
        assert!((s.ledger.coins - (c.t2 + 10.0 * margin)).abs() < 1e-9);
    }

    #[test]
    fn filter_discards_detrimental_blocks() {
        let mut c = cfg(0.2);
        c.p = 1.0;
        c.unlimited_budget = true;
        let policy = two_mode_policy(Schedule::AlwaysFilter);
        let mut s = ForklessState::new(&c, &policy);
        let mut rng = rng_from_seed(2);
        let mut saw_discard = false;
        for _ in 0..50 {
            let before = s.chain.len();
            let t = step(&c, &policy, &mut s, &mut rng);
            if t.block_symbol & 1 == 0 {
                assert!(t.discarded);
                assert_eq!(s.chain.len(), before);
                saw_discard = true;
            } else {
                assert_eq!(s.chain.len(), before + 1);
            }
        }
        assert!(saw_discard);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = cfg(0.2);
        let policy = two_mode_policy(Schedule::HonestUntilCapExhausted);
        assert_eq!(
            run_forkless_beacon(&c, &policy, 77).unwrap(),
            run_forkless_beacon(&c, &policy, 77).unwrap()
        );
    }

    #[test]
    fn trace_invariants() {
        let mut c = cfg(0.3);
        c.t2 = 20.0;
        for (seed, sched) in [
            Schedule::AlwaysFilter,
            Schedule::AlwaysHonest,
            Schedule::HonestUntilHeight(50),
            Schedule::HonestUntilCapExhausted,
        ]
        .into_iter()
        .enumerate()
        {
            let r = run_forkless_beacon(&c, &two_mode_policy(sched), seed as u64).unwrap();
            assert!(r.ledger.is_conserved());
            let mut idle = false;
            for t in &r.trace {
                if t.discarded {
                    assert!(t.adversary_successful);
                    assert_eq!(t.adversary_mode, AdversaryMode::FilterMode);
                    assert_eq!(t.block_symbol & 1, 0);
                }
                if idle {
                    assert_eq!(t.adversary_mode, AdversaryMode::IdleBankrupt);
                    assert_eq!(t.published_by, Some(Publisher::Honest));
                }
                idle |= t.adversary_mode == AdversaryMode::IdleBankrupt;
            }
        }
    }

    #[test]
    fn honest_profit_respects_the_cap() {
        let mut c = cfg(0.5);
        c.x = 100.0;
        c.y_p = 1.0;
        let policy = two_mode_policy(Schedule::AlwaysHonest);
        let r = run_forkless_beacon(&c, &policy, 5).unwrap();
        assert!(r.ledger.honest_net <= c.maxprofits(c.n) + 1e-9);
    }

    #[test]
    fn tail_bound_examples() {
        assert!((negbin_tail(2.0 / 3.0, 18.0, 0.1).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let mut last = 1.0;
        for ell in [1.0, 10.0, 100.0, 1000.0] {
            let v = negbin_tail(2.0 / 3.0, ell, 0.1).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(negbin_tail(0.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn bound_examples() {
        let c = ForklessConfig::exemplary(2001, 0.1, 5.0, 5.0);
        let b = upbound1_bias_bound(&c).unwrap();
        let ell = raw_ell(2001, 0.1).unwrap();
        assert_eq!(ell, 5);
        let expect = 0.1 + (-5.0f64 / 18.0).exp() + E / PI / (1996.0f64).sqrt();
        assert!((b - expect).abs() < 1e-12);

        let rich = ForklessConfig::exemplary(2001, 0.1, 500.0, 500.0);
        assert!(matches!(upbound1_bias_bound(&rich), Err(Error::BoundNotApplicable(_))));

        let zero_eps = upbound1_formula(0.0, 2001, 0, 2.0 / 3.0);
        assert!((zero_eps - (1.0 + E / PI / 2001f64.sqrt())).abs() < 1e-12);

        let big = upbound1_formula(0.05, 10_000, raw_ell(10_000, 0.05).unwrap(), 2.0 / 3.0);
        assert!((big - (0.05 + (-5.0f64 / 18.0).exp() + E / PI / 9995f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn profitable_filtering_is_not_covered() {
        let mut c = ForklessConfig::exemplary(2001, 0.1, 5.0, 5.0);
        c.y_p = 5.0;
        assert!(matches!(upbound1_bias_bound(&c), Err(Error::BoundNotApplicable(_))));
    }

    #[test]
    fn config_violations_are_listed() {
        let mut c = cfg(0.2);
        c.p = 1.5;
        c.n = 100;
        c.delta = 0.3;
        let names: Vec<_> = c.violations().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["p", "n", "delta"]);
    }

    proptest! {
        #[test]
        fn maxprofits_is_monotone(c in 0.0f64..10.0, r in 0.0f64..5.0, t in 0.0f64..100.0, dt in 0.0f64..10.0, i in 0usize..1000, di in 0usize..100) {
            let base = maxprofits(Some(c), r, t, i);
            prop_assert!(maxprofits(Some(c), r, t + dt, i) >= base);
            prop_assert!(maxprofits(Some(c), r, t, i + di) >= base);
        }

        #[test]
        fn ledger_is_conserved_on_random_configs(p in 0.0f64..0.9, t2 in 0.0f64..50.0, seed in 0u64..1000, h in 0usize..60) {
            let mut c = cfg(p);
            c.t2 = t2;
            c.n = 61;
            let r = run_forkless_beacon(&c, &two_mode_policy(Schedule::HonestUntilHeight(h)), seed).unwrap();
            prop_assert!(r.ledger.is_conserved());
            prop_assert!(r.ledger.coins >= -1e-9);
        }
    }
}
