//! Round-based longest-chain simulator running the beacon protocol: honest
//! parties mine on their adopted tip, a rushing adversary with `t` of the
//! `N` parties follows a pluggable strategy, and blocks published in round
//! `r` reach everyone in round `r + 1`.
//!
//! Once some honest chain has `n + k` blocks past the agreed start, the
//! output is the majority of the LSBs of `B1..Bn` on that chain.

pub mod metrics;
pub mod strategy;
pub mod tree;

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractors::majority;
use crate::forkless::BudgetLedger;
use crate::rng::{rng_from_seed, SimRng};
use crate::stats::{map_trials, BiasReport, BitTally};

pub use metrics::{
    bankruptcy_predicate, binding_budget_lhs, chain_quality, detect_bankruptcy_event, fork_depth,
    upbound2_params,
};
pub use strategy::{
    AdversaryCtx, BudgetConfig, DiscardDetrimental, GraftInfo, HonestMimic, MajorityPower,
    PrivateChain, Release, StartPoint, Strategy, StrategySpec, Withhold,
};
pub use tree::{AnnotatedChain, Block, BlockId, BlockTree, Creator, GENESIS};

fn one() -> u32 {
    1
}

fn default_delta() -> f64 {
    0.01
}

fn default_d() -> u32 {
    1 << 16
}

fn yes() -> bool {
    true
}

/// Window to watch for the bankruptcy event while running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankruptcyWatch {
    pub ell: u64,
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    /// `N`, all parties.
    pub parties: usize,
    /// `t`, parties the adversary controls.
    pub corrupted: usize,
    /// Oracle queries per party per round.
    #[serde(default = "one")]
    pub q: u32,
    /// Success probability of one query.
    pub success_prob: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overrides `λ = γ/((1+δ)β)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub n: u64,
    pub k: u64,
    #[serde(default = "default_d")]
    pub d: u32,
    /// Round at whose start the beacon window is fixed.
    #[serde(default)]
    pub warmup_rounds: u64,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    /// Stop the adversary for good once she cannot pay for a round.
    #[serde(default = "yes")]
    pub halt_on_bankruptcy: bool,
    #[serde(default)]
    pub watch: Option<BankruptcyWatch>,
}

impl BackboneConfig {
    pub fn new(parties: usize, corrupted: usize, success_prob: f64, n: u64, k: u64) -> Self {
        BackboneConfig {
            parties,
            corrupted,
            q: 1,
            success_prob,
            delta: default_delta(),
            lambda: None,
            n,
            k,
            d: default_d(),
            warmup_rounds: 0,
            max_rounds: None,
            halt_on_bankruptcy: true,
            watch: None,
        }
    }

    pub fn honest_parties(&self) -> usize {
        self.parties - self.corrupted
    }

    /// `α = (N − t)·q·p`.
    pub fn alpha(&self) -> f64 {
        self.honest_parties() as f64 * self.q as f64 * self.success_prob
    }

    /// `β = t·q·p`.
    pub fn beta(&self) -> f64 {
        self.corrupted as f64 * self.q as f64 * self.success_prob
    }

    /// `γ = α − α²`, honest power discounted for accidental forks.
    pub fn gamma(&self) -> f64 {
        let a = self.alpha();
        a - a * a
    }

    /// `λ` from `γ = λ(1+δ)β`, unless configured.
    pub fn lambda(&self) -> f64 {
        self.lambda
            .unwrap_or_else(|| self.gamma() / ((1.0 + self.delta) * self.beta()))
    }

    /// Probability that one honest party finds a block in a round.
    pub fn party_success(&self) -> f64 {
        1.0 - (1.0 - self.success_prob).powi(self.q as i32)
    }

    /// Configured horizon, or `50(n+k)/(α+β)`.
    pub fn max_rounds(&self) -> u64 {
        self.max_rounds.unwrap_or_else(|| {
            (50.0 * (self.n + self.k) as f64 / (self.alpha() + self.beta())).ceil() as u64
        })
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.parties == 0 {
            v.push(("parties", "must be at least 1".to_string()));
        }
        if self.corrupted >= self.parties {
            v.push((
                "corrupted",
                format!("{} leaves no honest party among {}", self.corrupted, self.parties),
            ));
        }
        if self.q == 0 {
            v.push(("q", "must be at least 1".to_string()));
        }
        if !(self.success_prob > 0.0 && self.success_prob <= 1.0) {
            v.push(("success_prob", format!("{} is not in (0, 1]", self.success_prob)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            v.push(("delta", format!("{} is not in (0, 1)", self.delta)));
        }
        if let Some(l) = self.lambda {
            if !(l >= 1.0) {
                v.push(("lambda", format!("{l} < 1")));
            }
        }
        if self.n % 2 == 0 {
            v.push(("n", format!("{} must be odd", self.n)));
        }
        if self.d < 2 || self.d % 2 != 0 {
            v.push(("d", format!("{} must be even and at least 2", self.d)));
        }
        if self.max_rounds == Some(0) {
            v.push(("max_rounds", "must be positive".to_string()));
        }
        if let Some(w) = self.watch {
            if w.window == 0 {
                v.push(("watch.window", "must be positive".to_string()));
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

    /// `(ℓ, L)` for this configuration's `λ` and `δ`.
    pub fn upbound2(&self, epsilon: f64) -> Result<(u64, u64)> {
        upbound2_params(epsilon, self.n, self.lambda(), self.delta)
    }
}

/// State of honest parties and the adversary at one round's end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Adopted tip of each honest party.
    pub tips: Vec<BlockId>,
    pub private_tips: Vec<BlockId>,
    /// Blocks published this round.
    pub new_blocks: Vec<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub tree: BlockTree,
    pub rounds: Vec<RoundRecord>,
}

/// One exported trace record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub round: u64,
    pub party: usize,
    pub chain_tip: BlockId,
    pub new_blocks: Vec<BlockId>,
}

impl ExecutionTrace {
    pub fn final_tips(&self) -> &[BlockId] {
        self.rounds.last().map(|r| r.tips.as_slice()).unwrap_or(&[])
    }

    pub fn lines(&self) -> impl Iterator<Item = TraceLine> + '_ {
        self.rounds.iter().flat_map(|r| {
            r.tips.iter().enumerate().map(move |(party, &tip)| TraceLine {
                round: r.round,
                party,
                chain_tip: tip,
                new_blocks: r.new_blocks.clone(),
            })
        })
    }

    /// Writes one JSON object per (round, honest party).
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in self.lines() {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<TraceLine>> {
        r.lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    }

    /// Whether every honest tip, every round, is at least as high as every
    /// block published before that round.
    pub fn adopts_longest_known(&self) -> bool {
        let mut by_round: Vec<(u64, u64)> = self
            .tree
            .blocks()
            .iter()
            .filter_map(|b| b.published_round.map(|r| (r, b.height)))
            .collect();
        by_round.sort_unstable();
        let mut idx = 0;
        let mut known = 0;
        for rec in &self.rounds {
            while idx < by_round.len() && by_round[idx].0 < rec.round {
                known = known.max(by_round[idx].1);
                idx += 1;
            }
            if rec.tips.iter().any(|&t| self.tree.height(t) < known) {
                return false;
            }
        }
        true
    }
}

/// Result of one beacon execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconOutcome {
    /// `None` when the horizon ran out.
    pub bit: Option<u8>,
    pub output_party: Option<usize>,
    /// Bit each honest party would output from its current chain, if that
    /// chain already holds `Bn`.
    pub party_bits: Vec<Option<u8>>,
    pub agreement: bool,
    pub rounds: u64,
    pub timed_out: bool,
    pub start: Option<StartPoint>,
    /// `B1` on the output chain.
    pub b1: Option<BlockId>,
    /// Adversary blocks among `B1..Bn` on the output chain.
    pub window_adversary_blocks: Option<u64>,
    pub max_fork_depth: u64,
    pub ledger: Option<BudgetLedger>,
    pub bankrupt_round: Option<u64>,
    /// Rounds she kept mining after going bankrupt.
    pub post_bankruptcy_rounds: u64,
    /// First round the watched bankruptcy event held, with its `B`.
    pub event: Option<(u64, BlockId)>,
    pub graft: Option<GraftInfo>,
    /// The output party's chain.
    pub output_chain: Option<AnnotatedChain>,
}

/// A running execution. Drive it with [`Execution::run_round`].
pub struct Execution<'a> {
    cfg: &'a BackboneConfig,
    rng: &'a mut SimRng,
    tree: BlockTree,
    tips: Vec<BlockId>,
    prev_tips: Vec<BlockId>,
    round: u64,
    ledger: Option<BudgetLedger>,
    budget: Option<BudgetConfig>,
    halted: bool,
    bankrupt_round: Option<u64>,
    post_bankruptcy_rounds: u64,
    start: Option<StartPoint>,
    in_flight: Vec<BlockId>,
    adversary_draw: Option<Binomial>,
    max_fork_depth: u64,
    event: Option<(u64, BlockId)>,
    records: Option<Vec<RoundRecord>>,
}

impl<'a> Execution<'a> {
    pub fn new(
        cfg: &'a BackboneConfig,
        strategy: &dyn Strategy,
        rng: &'a mut SimRng,
        record: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let queries = cfg.corrupted as u64 * cfg.q as u64;
        let adversary_draw = if queries > 0 {
            Some(Binomial::new(queries, cfg.success_prob).map_err(|e| {
                Error::invalid("success_prob", e.to_string())
            })?)
        } else {
            None
        };
        let budget = strategy.budget();
        Ok(Execution {
            cfg,
            rng,
            tree: BlockTree::new(),
            tips: vec![GENESIS; cfg.honest_parties()],
            prev_tips: vec![GENESIS; cfg.honest_parties()],
            round: 0,
            ledger: budget.map(|b| b.ledger()),
            budget,
            halted: false,
            bankrupt_round: None,
            post_bankruptcy_rounds: 0,
            start: None,
            in_flight: Vec::new(),
            adversary_draw,
            max_fork_depth: 0,
            event: None,
            records: record.then(Vec::new),
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn tips(&self) -> &[BlockId] {
        &self.tips
    }

    pub fn start(&self) -> Option<StartPoint> {
        self.start
    }

    pub fn ledger(&self) -> Option<&BudgetLedger> {
        self.ledger.as_ref()
    }

    /// Delivery, honest mining, then the adversary's move.
    pub fn run_round(&mut self, strategy: &mut dyn Strategy) -> Result<()> {
        let max = self.cfg.max_rounds();
        if self.round >= max {
            return Err(Error::Timeout(max));
        }
        let r = self.round;
        if r == self.cfg.warmup_rounds {
            let (_, &parent) = self
                .tips
                .iter()
                .enumerate()
                .max_by_key(|&(i, &t)| (self.tree.height(t), std::cmp::Reverse(i)))
                .expect("at least one honest party");
            self.start = Some(StartPoint {
                height: self.tree.height(parent) + 1,
                parent,
            });
        }

        // Last round's publications. Highest wins; the adversary's block
        // wins a tie among them; a party keeps its tip on equal height.
        let incoming = std::mem::take(&mut self.in_flight);
        let best_new = incoming.iter().copied().min_by_key(|&b| {
            let blk = self.tree.get(b);
            (std::cmp::Reverse(blk.height), !blk.creator.is_adversary())
        });
        if let Some(b) = best_new {
            let h = self.tree.height(b);
            for tip in self.tips.iter_mut() {
                if h > self.tree.height(*tip) {
                    *tip = b;
                }
            }
        }

        let mut published = Vec::new();
        let p = self.cfg.party_success();
        for (i, tip) in self.tips.iter_mut().enumerate() {
            if self.rng.random_bool(p) {
                let symbol = self.rng.random_range(0..self.cfg.d);
                let b = self.tree.add(*tip, symbol, Creator::Honest(i), r);
                self.tree.publish(b, r);
                published.push(b);
                *tip = b;
            }
        }

        if !self.halted {
            let mut successes = 0;
            if strategy.wants_to_mine(r) {
                let mut pays = true;
                if let (Some(l), Some(b)) = (self.ledger.as_mut(), self.budget) {
                    let cost = b.cost_per_query * self.cfg.corrupted as f64 * self.cfg.q as f64;
                    if !l.bankrupt && !l.try_charge(cost, false) {
                        self.bankrupt_round = Some(r);
                    }
                    if l.bankrupt {
                        if self.cfg.halt_on_bankruptcy {
                            self.halted = true;
                            pays = false;
                        } else {
                            self.post_bankruptcy_rounds += 1;
                        }
                    }
                }
                if pays {
                    if let Some(draw) = &self.adversary_draw {
                        successes = draw.sample(self.rng) as u32;
                    }
                }
            }
            if !self.halted {
                let honest_tips = self.tips.clone();
                let mut ctx = AdversaryCtx {
                    tree: &mut self.tree,
                    rng: self.rng,
                    ledger: &mut self.ledger,
                    reward: self.budget.map_or(0.0, |b| b.reward),
                    published: &mut published,
                    round: r,
                    successes,
                    d: self.cfg.d,
                    honest_tips: &honest_tips,
                    start: self.start,
                    n: self.cfg.n,
                    k: self.cfg.k,
                };
                strategy.act(&mut ctx);
            }
        }

        self.max_fork_depth = self
            .max_fork_depth
            .max(fork_depth(&self.tree, &self.tips, &self.prev_tips));
        if let (None, Some(w), Some(s)) = (self.event, self.cfg.watch, self.start) {
            if let Some(b) = self.tree.ancestor_at(self.tips[0], s.height) {
                if self
                    .tips
                    .iter()
                    .all(|&t| metrics::predicate_on_tree(&self.tree, t, b, w.ell, w.window))
                {
                    self.event = Some((r, b));
                }
            }
        }
        if let Some(recs) = self.records.as_mut() {
            recs.push(RoundRecord {
                round: r,
                tips: self.tips.clone(),
                private_tips: strategy.private_tips(),
                new_blocks: published.clone(),
            });
        }
        self.prev_tips.clone_from(&self.tips);
        self.in_flight = published;
        self.round += 1;
        Ok(())
    }

    /// First honest party whose chain reaches `n + k` blocks past the start.
    fn finished_party(&self) -> Option<usize> {
        let s = self.start?;
        let target = s.height - 1 + self.cfg.n + self.cfg.k;
        self.tips.iter().position(|&t| self.tree.height(t) >= target)
    }

    fn bit_of(&self, tip: BlockId, s: StartPoint) -> Option<u8> {
        let symbols = self.tree.symbols_from(tip, s.height, self.cfg.n)?;
        let bits: Vec<u8> = symbols.iter().map(|x| (x & 1) as u8).collect();
        Some(majority(&bits).expect("n is odd"))
    }

    fn finish(self, strategy: &dyn Strategy, output_party: Option<usize>) -> (BeaconOutcome, Option<ExecutionTrace>) {
        let start = self.start;
        let party_bits: Vec<Option<u8>> = match start {
            Some(s) => self.tips.iter().map(|&t| self.bit_of(t, s)).collect(),
            None => vec![None; self.tips.len()],
        };
        let reported: Vec<u8> = party_bits.iter().flatten().copied().collect();
        let agreement = reported.windows(2).all(|w| w[0] == w[1]);
        let (bit, b1, window_adv, output_chain) = match (output_party, start) {
            (Some(i), Some(s)) => {
                let tip = self.tips[i];
                let chain = self.tree.annotated_chain(tip);
                let from = s.height as usize;
                let adv = chain.adversarial[from..from + self.cfg.n as usize]
                    .iter()
                    .filter(|&&a| a)
                    .count() as u64;
                (
                    party_bits[i],
                    Some(chain.blocks[from]),
                    Some(adv),
                    Some(chain),
                )
            }
            _ => (None, None, None, None),
        };
        let outcome = BeaconOutcome {
            bit,
            output_party,
            party_bits,
            agreement,
            rounds: self.round,
            timed_out: output_party.is_none(),
            start,
            b1,
            window_adversary_blocks: window_adv,
            max_fork_depth: self.max_fork_depth,
            ledger: self.ledger,
            bankrupt_round: self.bankrupt_round,
            post_bankruptcy_rounds: self.post_bankruptcy_rounds,
            event: self.event,
            graft: strategy.graft_info(),
            output_chain,
        };
        let trace = self.records.map(|rounds| ExecutionTrace {
            tree: self.tree,
            rounds,
        });
        (outcome, trace)
    }
}

/// Runs rounds until the beacon can be read and the strategy is settled,
/// or the horizon runs out (reported through `timed_out`).
pub fn simulate_beacon(
    cfg: &BackboneConfig,
    strategy: &mut dyn Strategy,
    rng: &mut SimRng,
    record: bool,
) -> Result<(BeaconOutcome, Option<ExecutionTrace>)> {
    let mut exec = Execution::new(cfg, strategy, rng, record)?;
    loop {
        if let Some(i) = exec.finished_party() {
            if strategy.settled(&exec.tree, &exec.tips) {
                return Ok(exec.finish(strategy, Some(i)));
            }
        }
        match exec.run_round(strategy) {
            Ok(()) => {}
            Err(Error::Timeout(_)) => return Ok(exec.finish(strategy, None)),
            Err(e) => return Err(e),
        }
    }
}

/// One full beacon execution with its trace. Running out of rounds is an
/// error here.
pub fn run_pi_beacon(
    cfg: &BackboneConfig,
    spec: &StrategySpec,
    seed: u64,
) -> Result<(BeaconOutcome, ExecutionTrace)> {
    let mut strategy = spec.build();
    let mut rng = rng_from_seed(seed);
    let (outcome, trace) = simulate_beacon(cfg, strategy.as_mut(), &mut rng, true)?;
    if outcome.timed_out {
        return Err(Error::Timeout(cfg.max_rounds()));
    }
    Ok((outcome, trace.expect("recording was requested")))
}

/// Independent runs without traces, in trial order.
pub fn run_many(
    cfg: &BackboneConfig,
    spec: &StrategySpec,
    trials: u64,
    seed: u64,
) -> Result<Vec<BeaconOutcome>> {
    cfg.validate()?;
    if let Some((name, reason)) = spec.violations().into_iter().next() {
        return Err(Error::invalid(name, reason));
    }
    map_trials(trials, seed, |rng, _| {
        let mut s = spec.build();
        simulate_beacon(cfg, s.as_mut(), rng, false).map(|(o, _)| o)
    })
    .into_iter()
    .collect()
}

/// Bias estimate over runs that finished, plus the number that timed out.
pub fn estimate_backbone_bias(
    cfg: &BackboneConfig,
    spec: &StrategySpec,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Result<(BiasReport, u64)> {
    let runs = run_many(cfg, spec, trials, seed)?;
    let mut tally = BitTally::default();
    let mut timeouts = 0;
    for o in &runs {
        match o.bit {
            Some(b) => tally.record(b),
            None => timeouts += 1,
        }
    }
    Ok((BiasReport::from_tally(tally, seed, confidence)?, timeouts))
}

/// Fraction of runs where some pair of honest chains, cut back by `k`
/// blocks, disagree.
pub fn common_prefix_violation_rate(
    cfg: &BackboneConfig,
    spec: &StrategySpec,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    Ok(common_prefix_violation_rates(cfg, spec, &[k], trials, seed)?[0])
}

/// [`common_prefix_violation_rate`] for several `k` on the same runs.
pub fn common_prefix_violation_rates(
    cfg: &BackboneConfig,
    spec: &StrategySpec,
    ks: &[u64],
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1".to_string()));
    }
    let runs = run_many(cfg, spec, trials, seed)?;
    Ok(ks
        .iter()
        .map(|&k| {
            runs.iter().filter(|o| o.max_fork_depth > k).count() as f64 / trials as f64
        })
        .collect())
}
