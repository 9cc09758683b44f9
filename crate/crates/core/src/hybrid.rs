//! Commit, beacon, decommit: designated parties lock coins behind a
//! commitment to a random bit, a blockchain beacon runs, then they reveal.
//! A party that does not reveal in time loses its coins and counts as 0 in
//! that round and every later one.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{simulate_beacon, BackboneConfig, StrategySpec};
use crate::error::{Error, Result};
use crate::extractors::{
    iterated_majority, majority, withhold_flip_probability, ExtractorKind,
};
use crate::forkless::{run_forkless_summary, ForklessConfig, TwoModePolicy};
use crate::rng::{rng_from_seed, SimRng};

/// The function `f` applied to the revealed bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineKind {
    Majority,
    Xor,
    IteratedMajority,
}

pub fn combine(kind: CombineKind, bits: &[u8]) -> Result<u8> {
    match kind {
        CombineKind::Majority => majority(bits),
        CombineKind::Xor => Ok(bits.iter().fold(0, |a, &b| a ^ (b & 1))),
        CombineKind::IteratedMajority => iterated_majority(bits),
    }
}

fn default_beacon_n() -> u64 {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    /// Designated parties.
    pub m: usize,
    /// Rounds (odd).
    pub r: usize,
    /// Blocks each party has to react in.
    pub t: u64,
    /// Confirmation depth.
    pub k: u64,
    /// Coins each party locks per round.
    pub q: f64,
    pub f_kind: CombineKind,
    /// Index of the agreed starting block.
    #[serde(default)]
    pub u1: u64,
    /// Beacon length inside each round.
    #[serde(default = "default_beacon_n")]
    pub beacon_n: u64,
}

impl HybridConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.m == 0 {
            v.push(("m", "must be at least 1".to_string()));
        }
        if self.r % 2 == 0 {
            v.push(("r", format!("{} must be odd", self.r)));
        }
        if !(self.q >= 0.0) {
            v.push(("q", format!("{} must be non-negative", self.q)));
        }
        if self.beacon_n % 2 == 0 {
            v.push(("beacon_n", format!("{} must be odd", self.beacon_n)));
        }
        match self.f_kind {
            CombineKind::Majority if self.m % 2 == 0 => {
                v.push(("m", format!("{} must be odd for majority", self.m)));
            }
            CombineKind::IteratedMajority if !is_power_of_three(self.m) => {
                v.push(("m", format!("{} must be a power of 3", self.m)));
            }
            _ => {}
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }

    /// Block indices of round `j` (0-based).
    pub fn windows(&self, j: usize) -> Windows {
        let span = self.beacon_n + self.t + 2 * self.k + 1;
        let u = self.u1 + j as u64 * span;
        let u_prime = u + self.t + self.k;
        let u_dprime = u_prime + self.beacon_n + self.k;
        Windows {
            u,
            u_prime,
            u_dprime,
            reveal_end: u_dprime + self.t,
            settled: u_dprime + self.t + self.k,
        }
    }

    /// Blocks one round spans from `u_j` to the settled decommitments,
    /// `n + 2t + 3k`.
    pub fn round_span(&self) -> u64 {
        let w = self.windows(0);
        w.settled - w.u
    }
}

fn is_power_of_three(mut m: usize) -> bool {
    if m == 0 {
        return false;
    }
    while m % 3 == 0 {
        m /= 3;
    }
    m == 1
}

/// `u' = u+t+k`, `u'' = u'+n+k`; reveals are due by `u''+t` and settled at
/// `u''+t+k`. The next round starts at `u''+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub u: u64,
    pub u_prime: u64,
    pub u_dprime: u64,
    pub reveal_end: u64,
    pub settled: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscrowStatus {
    Locked,
    Reclaimed,
    Forfeited,
}

/// `q` coins locked behind a commitment until block `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escrow {
    pub party: usize,
    pub round: usize,
    /// Opaque commitment token.
    pub commitment: u64,
    pub locked: f64,
    pub limit: u64,
    pub status: EscrowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub windows: Windows,
    pub beacon_bit: u8,
    pub committed: Vec<bool>,
    pub decommitted: Vec<bool>,
    /// `d'_i`.
    pub effective: Vec<u8>,
    /// `s_j = b ⊕ f(d')`.
    pub s: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridRun {
    pub bit: u8,
    pub records: Vec<RoundRecord>,
    pub escrows: Vec<Escrow>,
    /// Coins destroyed by missed reveals.
    pub destroyed: f64,
}

impl HybridRun {
    pub fn locked(&self) -> f64 {
        self.escrows.iter().map(|e| e.locked).sum()
    }

    pub fn reclaimed(&self) -> f64 {
        self.escrows
            .iter()
            .filter(|e| e.status == EscrowStatus::Reclaimed)
            .map(|e| e.locked)
            .sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Supplies the beacon bit of each round.
pub trait ChainProvider: Send {
    fn beacon_bit(&mut self, round: usize, rng: &mut SimRng) -> Result<u8>;
}

/// Beacon from the forkless model. The cheap default.
#[derive(Debug, Clone)]
pub struct ForklessProvider {
    pub cfg: ForklessConfig,
    pub policy: TwoModePolicy,
}

impl ChainProvider for ForklessProvider {
    fn beacon_bit(&mut self, _round: usize, rng: &mut SimRng) -> Result<u8> {
        Ok(run_forkless_summary(&self.cfg, &self.policy, rng).bit)
    }
}

/// Beacon from the longest-chain simulator.
#[derive(Debug, Clone)]
pub struct BackboneProvider {
    pub cfg: BackboneConfig,
    pub spec: StrategySpec,
}

impl ChainProvider for BackboneProvider {
    fn beacon_bit(&mut self, _round: usize, rng: &mut SimRng) -> Result<u8> {
        let mut s = self.spec.build();
        let (o, _) = simulate_beacon(&self.cfg, s.as_mut(), rng, false)?;
        o.bit.ok_or(Error::Timeout(self.cfg.max_rounds()))
    }
}

/// What a corrupted coalition sees when deciding which reveals to skip:
/// the beacon bit, every committed bit (honest reveals are on chain
/// before the window closes) and past outputs.
#[derive(Debug, Clone)]
pub struct RevealView<'a> {
    pub round: usize,
    pub beacon_bit: u8,
    pub kind: CombineKind,
    /// `d'` if every live party reveals.
    pub effective: &'a [u8],
    /// Corrupted parties that committed this round.
    pub live_corrupted: &'a [usize],
    pub past: &'a [u8],
}

impl RevealView<'_> {
    fn output_with(&self, withheld: &[usize]) -> u8 {
        let mut d = self.effective.to_vec();
        for &i in withheld {
            d[i] = 0;
        }
        self.beacon_bit ^ combine(self.kind, &d).expect("validated length")
    }

    /// Smallest set of live corrupted reveals whose omission makes this
    /// round's `s` equal `target`, if any.
    pub fn cheapest_flip(&self, target: u8) -> Option<Vec<usize>> {
        if self.output_with(&[]) == target {
            return Some(Vec::new());
        }
        let ones: Vec<usize> = self
            .live_corrupted
            .iter()
            .copied()
            .filter(|&i| self.effective[i] == 1)
            .collect();
        let n = ones.len().min(16);
        let mut masks: Vec<u32> = (1..1u32 << n).collect();
        masks.sort_by_key(|m| m.count_ones());
        masks.into_iter().find_map(|mask| {
            let set: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| ones[b]).collect();
            (self.output_with(&set) == target).then_some(set)
        })
    }
}

pub trait HybridAdversary: Send {
    fn corrupted(&self) -> &[usize];

    fn begin_round(&mut self, _round: usize, _past: &[u8]) {}

    /// Bit a corrupted party commits to; `None` skips the commitment.
    fn commit(&mut self, round: usize, party: usize, rng: &mut SimRng) -> Option<u8>;

    /// Corrupted parties that skip their reveal.
    fn withhold(&mut self, view: &RevealView<'_>) -> Vec<usize>;
}

/// Corrupts nobody.
#[derive(Debug, Default)]
pub struct NoAdversary;

impl HybridAdversary for NoAdversary {
    fn corrupted(&self) -> &[usize] {
        &[]
    }

    fn commit(&mut self, _: usize, _: usize, _: &mut SimRng) -> Option<u8> {
        None
    }

    fn withhold(&mut self, _: &RevealView<'_>) -> Vec<usize> {
        Vec::new()
    }
}

/// Commits ones for just enough corrupted parties to carry the combined
/// value, then after seeing the beacon bit skips the fewest reveals that
/// make the output equal `desired`.
#[derive(Debug)]
pub struct WithholdingAdversary {
    corrupted: Vec<usize>,
    desired: u8,
    ones: usize,
}

impl WithholdingAdversary {
    pub fn new(corrupted: Vec<usize>, desired: u8, m: usize) -> Self {
        let h = m.div_ceil(2);
        let ones = corrupted.len().min(h);
        WithholdingAdversary {
            corrupted,
            desired: desired & 1,
            ones,
        }
    }
}

impl HybridAdversary for WithholdingAdversary {
    fn corrupted(&self) -> &[usize] {
        &self.corrupted
    }

    fn commit(&mut self, _round: usize, party: usize, _rng: &mut SimRng) -> Option<u8> {
        let rank = self.corrupted.iter().position(|&c| c == party)?;
        Some((rank < self.ones) as u8)
    }

    fn withhold(&mut self, view: &RevealView<'_>) -> Vec<usize> {
        view.cheapest_flip(self.desired).unwrap_or_default()
    }
}

/// Takes control of at most `quota` rounds, deciding before each round from
/// past outputs alone, and forces `s_j = desired` in the rounds it controls.
#[derive(Debug)]
pub struct AdaptiveRoundAdversary {
    corrupted: Vec<usize>,
    desired: u8,
    quota: usize,
    controlling: bool,
    r: usize,
    used: usize,
}

/// [`AdaptiveRoundAdversary`] with `quota` controlled rounds out of `r`.
pub fn adaptive_round_adversary(
    quota: usize,
    corrupted: Vec<usize>,
    desired: u8,
    r: usize,
) -> AdaptiveRoundAdversary {
    AdaptiveRoundAdversary {
        corrupted,
        desired: desired & 1,
        quota,
        controlling: false,
        r,
        used: 0,
    }
}

impl AdaptiveRoundAdversary {
    pub fn controlled_rounds(&self) -> usize {
        self.used
    }
}

impl HybridAdversary for AdaptiveRoundAdversary {
    fn corrupted(&self) -> &[usize] {
        &self.corrupted
    }

    fn begin_round(&mut self, _round: usize, past: &[u8]) {
        // Control only while the final majority is still open.
        let need = self.r.div_ceil(2);
        let wins = past.iter().filter(|&&s| s == self.desired).count();
        let losses = past.len() - wins;
        self.controlling = self.used < self.quota && wins < need && losses < need;
        if self.controlling {
            self.used += 1;
        }
    }

    fn commit(&mut self, _round: usize, party: usize, _rng: &mut SimRng) -> Option<u8> {
        self.corrupted.contains(&party).then_some(1)
    }

    fn withhold(&mut self, view: &RevealView<'_>) -> Vec<usize> {
        if !self.controlling {
            return Vec::new();
        }
        view.cheapest_flip(self.desired).unwrap_or_default()
    }
}

/// Runs all `r` rounds and outputs `majority(s_1..s_r)`.
pub fn run_hybrid(
    cfg: &HybridConfig,
    adversary: &mut dyn HybridAdversary,
    chain: &mut dyn ChainProvider,
    seed: u64,
) -> Result<HybridRun> {
    run_hybrid_with(cfg, adversary, chain, &mut rng_from_seed(seed))
}

pub fn run_hybrid_with(
    cfg: &HybridConfig,
    adversary: &mut dyn HybridAdversary,
    chain: &mut dyn ChainProvider,
    rng: &mut SimRng,
) -> Result<HybridRun> {
    cfg.validate()?;
    let m = cfg.m;
    let corrupt: Vec<bool> = {
        let mut v = vec![false; m];
        for &i in adversary.corrupted() {
            if i >= m {
                return Err(Error::invalid("corrupted", format!("party {i} >= m = {m}")));
            }
            v[i] = true;
        }
        v
    };
    let mut forfeited = vec![false; m];
    let mut records = Vec::with_capacity(cfg.r);
    let mut escrows = Vec::new();
    let mut destroyed = 0.0;
    let mut past = Vec::with_capacity(cfg.r);
    for j in 0..cfg.r {
        let w = cfg.windows(j);
        adversary.begin_round(j, &past);
        let mut committed = vec![false; m];
        let mut d = vec![0u8; m];
        let mut escrow_of = BTreeMap::new();
        for i in 0..m {
            if forfeited[i] {
                continue;
            }
            let bit = if corrupt[i] {
                adversary.commit(j, i, rng)
            } else {
                Some(rng.random_range(0..2u8))
            };
            match bit {
                Some(b) => {
                    committed[i] = true;
                    d[i] = b & 1;
                    escrow_of.insert(i, escrows.len());
                    escrows.push(Escrow {
                        party: i,
                        round: j,
                        commitment: rng.random(),
                        locked: cfg.q,
                        limit: w.u_dprime,
                        status: EscrowStatus::Locked,
                    });
                }
                None => forfeited[i] = true,
            }
        }

        let b = chain.beacon_bit(j, rng)? & 1;

        let live: Vec<usize> = (0..m).filter(|&i| corrupt[i] && committed[i]).collect();
        let withheld = adversary.withhold(&RevealView {
            round: j,
            beacon_bit: b,
            kind: cfg.f_kind,
            effective: &d,
            live_corrupted: &live,
            past: &past,
        });
        let mut decommitted = committed.clone();
        for &i in &withheld {
            if i < m && corrupt[i] && committed[i] {
                decommitted[i] = false;
            }
        }
        let mut effective = vec![0u8; m];
        for i in 0..m {
            let Some(&e) = escrow_of.get(&i) else { continue };
            if decommitted[i] {
                escrows[e].status = EscrowStatus::Reclaimed;
                effective[i] = d[i];
            } else {
                escrows[e].status = EscrowStatus::Forfeited;
                destroyed += escrows[e].locked;
                forfeited[i] = true;
            }
        }
        let s = b ^ combine(cfg.f_kind, &effective)?;
        past.push(s);
        records.push(RoundRecord {
            round: j,
            windows: w,
            beacon_bit: b,
            committed,
            decommitted,
            effective,
            s,
        });
    }
    Ok(HybridRun {
        bit: majority(&past)?,
        records,
        escrows,
        destroyed,
    })
}

/// Hypotheses of the single-round majority claim: the reserve plus maximal
/// profits over `n+2t+3k` blocks stays strictly below `q`, the adversary
/// never goes under budget, and she corrupts a minority.
pub fn claim1_conditions(
    cfg: &HybridConfig,
    r1: f64,
    r2: f64,
    maxprofits: &dyn Fn(f64, u64) -> f64,
    goes_under_budget: bool,
    corrupted: usize,
) -> bool {
    let budget = r2 + maxprofits(r1, cfg.round_span()) < cfg.q;
    budget && !goes_under_budget && 2 * corrupted < cfg.m
}

/// `max(⌊2ε(π/e)√(r−√r)⌋ − 1, 0)`.
pub fn claim2_ell(r: u64, epsilon: f64) -> Result<u64> {
    if r < 2 {
        return Err(Error::invalid("r", format!("{r} < 2")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    let rf = r as f64;
    let raw = (2.0 * epsilon * (PI / E) * (rf - rf.sqrt()).sqrt()).floor() as u64;
    Ok(raw.saturating_sub(1))
}

/// Exact best `|Pr(majority = 1) − ½|` over every adaptive adversary that
/// may set at most `quota` of `r` fair bits, deciding each from the bits
/// so far.
pub fn optimal_adaptive_bias(r: usize, quota: usize) -> Result<BigRational> {
    if r % 2 == 0 {
        return Err(Error::EvenLength(r));
    }
    // value[q][ones] at position i: best Pr(majority = 1) from here on.
    let need = r.div_ceil(2);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut next: Vec<Vec<BigRational>> = (0..=quota)
        .map(|_| {
            (0..=r)
                .map(|ones| {
                    if ones >= need {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for i in (0..r).rev() {
        let mut cur = next.clone();
        for q in 0..=quota {
            for ones in 0..=i {
                let fair = (&next[q][ones] + &next[q][ones + 1]) * &half;
                let best = if q > 0 {
                    let set = next[q - 1][ones + 1].clone().max(next[q - 1][ones].clone());
                    set.max(fair)
                } else {
                    fair
                };
                cur[q][ones] = best;
            }
        }
        next = cur;
    }
    Ok(&next[quota][0] - half)
}

/// Probability that withholding `corrupted` of `m` reveals flips `f`,
/// the rest being fair bits. Always 1 for xor.
pub fn pivotal_probability(kind: CombineKind, m: usize, corrupted: usize) -> Result<BigRational> {
    match kind {
        CombineKind::Xor => Ok(BigRational::one()),
        CombineKind::Majority => withhold_flip_probability(m, ExtractorKind::Majority, corrupted),
        CombineKind::IteratedMajority => {
            withhold_flip_probability(m, ExtractorKind::IteratedMajority, corrupted)
        }
    }
}

/// Exact check that with xor, any adversary who always reveals and at
/// least one honest fair bit, `s` is uniform: enumerates every corrupted
/// set of size below `m`, their bits and the beacon bit.
pub fn xor_uniform_exact(m: usize) -> bool {
    (0..1u32 << m).filter(|c: &u32| (c.count_ones() as usize) < m).all(|corrupt| {
        let honest: Vec<usize> = (0..m).filter(|i| corrupt >> i & 1 == 0).collect();
        (0..1u32 << m).all(|fixed| {
            (0..2u8).all(|b| {
                let mut ones = 0u32;
                for h in 0..1u32 << honest.len() {
                    let mut bits = vec![0u8; m];
                    for i in 0..m {
                        bits[i] = (fixed >> i & 1) as u8;
                    }
                    for (k, &i) in honest.iter().enumerate() {
                        bits[i] = (h >> k & 1) as u8;
                    }
                    ones += (b ^ combine(CombineKind::Xor, &bits).unwrap()) as u32;
                }
                2 * ones == 1 << honest.len()
            })
        })
    })
}

/// Exact expected coins destroyed in one majority round by
/// [`WithholdingAdversary`] holding `corrupted` of `m` parties, over the
/// honest bits and a fair beacon bit.
pub fn expected_withhold_penalty(m: usize, corrupted: usize, q: &BigRational) -> Result<BigRational> {
    if m % 2 == 0 || corrupted > m || corrupted == 0 {
        return Err(Error::invalid(
            "m",
            format!("need odd m and 1..=m corrupted, got m={m}, corrupted={corrupted}"),
        ));
    }
    let adv: Vec<usize> = (0..corrupted).collect();
    let honest = m - corrupted;
    let mut a = WithholdingAdversary::new(adv.clone(), 1, m);
    let mut rng = rng_from_seed(0);
    let committed: Vec<u8> = adv.iter().map(|&i| a.commit(0, i, &mut rng).unwrap()).collect();
    let mut total = BigInt::zero();
    for h in 0..1u64 << honest {
        for b in 0..2u8 {
            let mut d = committed.clone();
            d.extend((0..honest).map(|k| (h >> k & 1) as u8));
            let view = RevealView {
                round: 0,
                beacon_bit: b,
                kind: CombineKind::Majority,
                effective: &d,
                live_corrupted: &adv,
                past: &[],
            };
            total += BigInt::from(a.withhold(&view).len());
        }
    }
    Ok(BigRational::new(total, BigInt::from(2u64 << honest)) * q)
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|c| c.is_ascii_hexdigit())
}

/// The timelocked commitment script.
pub fn emit_cltv_script(tau: u64, c_hex: &str, pk_hex: &str) -> Result<String> {
    for s in [c_hex, pk_hex] {
        if !is_hex(s) {
            return Err(Error::NotHex(s.to_string()));
        }
    }
    Ok(format!(
        "{tau} CHECKLOCKTIMEVERIFY IF HASH256 {c_hex} EQUALVERIFY {pk_hex} CHECKSIGVERIFY ENDIF"
    ))
}

/// Inverse of [`emit_cltv_script`].
pub fn parse_cltv_script(script: &str) -> Result<(u64, String, String)> {
    let bad = || Error::MalformedScript(script.to_string());
    let parts: Vec<&str> = script.split(' ').collect();
    match parts.as_slice() {
        [tau, "CHECKLOCKTIMEVERIFY", "IF", "HASH256", c, "EQUALVERIFY", pk, "CHECKSIGVERIFY", "ENDIF"] => {
            let tau: u64 = tau.parse().map_err(|_| bad())?;
            if !is_hex(c) || !is_hex(pk) {
                return Err(bad());
            }
            Ok((tau, c.to_string(), pk.to_string()))
        }
        _ => Err(bad()),
    }
}
