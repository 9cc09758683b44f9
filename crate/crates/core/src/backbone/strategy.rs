//! Adversarial mining strategies and the context they act through.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BlockId, BlockTree, Creator};
use crate::extractors::majority;
use crate::forkless::BudgetLedger;
use crate::rng::SimRng;

/// Where the beacon window starts: `B1` sits at `height`, on top of `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartPoint {
    pub height: u64,
    pub parent: BlockId,
}

/// Coin accounting for a budget-limited adversary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Coins available at the start.
    pub reserve: f64,
    /// Credited for every adversary block she publishes.
    pub reward: f64,
    /// Paid per oracle query in every round she mines.
    pub cost_per_query: f64,
}

impl BudgetConfig {
    pub fn ledger(&self) -> BudgetLedger {
        BudgetLedger::new(self.reserve, false)
    }
}

/// A grafted block supply: `len` adversary blocks starting at `first`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraftInfo {
    pub first: BlockId,
    pub len: u64,
    pub round: u64,
}

/// What the adversary may do within one round. She has already seen the
/// honest blocks of this round.
pub struct AdversaryCtx<'a> {
    pub(super) tree: &'a mut BlockTree,
    pub(super) rng: &'a mut SimRng,
    pub(super) ledger: &'a mut Option<BudgetLedger>,
    pub(super) reward: f64,
    pub(super) published: &'a mut Vec<BlockId>,
    pub(super) round: u64,
    pub(super) successes: u32,
    pub(super) d: u32,
    pub(super) honest_tips: &'a [BlockId],
    pub(super) start: Option<StartPoint>,
    pub(super) n: u64,
    pub(super) k: u64,
}

impl AdversaryCtx<'_> {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn tree(&self) -> &BlockTree {
        self.tree
    }

    pub fn honest_tips(&self) -> &[BlockId] {
        self.honest_tips
    }

    pub fn start(&self) -> Option<StartPoint> {
        self.start
    }

    pub fn beacon_len(&self) -> u64 {
        self.n
    }

    pub fn confirmations(&self) -> u64 {
        self.k
    }

    /// Unspent successful queries this round.
    pub fn successes_left(&self) -> u32 {
        self.successes
    }

    /// Spends one success on a new block extending `parent`, with a uniform
    /// symbol. The block stays private until published.
    pub fn mine(&mut self, parent: BlockId) -> Option<BlockId> {
        if self.successes == 0 {
            return None;
        }
        self.successes -= 1;
        let symbol = self.rng.random_range(0..self.d);
        Some(self.tree.add(parent, symbol, Creator::Adversary, self.round))
    }

    /// Publishes `id` together with its unpublished ancestors. Each newly
    /// published adversary block earns the reward.
    pub fn publish(&mut self, id: BlockId) {
        let fresh = self.tree.publish(id, self.round);
        for &b in &fresh {
            if self.tree.get(b).creator.is_adversary() {
                if let Some(l) = self.ledger.as_mut() {
                    l.credit(self.reward, false, f64::INFINITY);
                }
            }
        }
        self.published.extend(fresh);
    }

    /// Highest published block, this round's honest blocks included.
    pub fn best_public(&self) -> BlockId {
        self.tree.best_published()
    }

    /// Copies the symbols of `supply` onto `onto` as fresh adversary blocks
    /// and returns the new ids. Costs no queries.
    pub fn graft(&mut self, supply: &[BlockId], onto: BlockId) -> Vec<BlockId> {
        let mut parent = onto;
        let mut out = Vec::with_capacity(supply.len());
        for &b in supply {
            let symbol = self.tree.get(b).symbol;
            parent = self.tree.add(parent, symbol, Creator::Adversary, self.round);
            out.push(parent);
        }
        out
    }
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Whether to spend this round's queries. Idle rounds cost nothing.
    fn wants_to_mine(&mut self, _round: u64) -> bool {
        true
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>);

    /// Whether the adversary is done with what she wanted to achieve; the
    /// beacon only terminates once this holds.
    fn settled(&self, _tree: &BlockTree, _honest_tips: &[BlockId]) -> bool {
        true
    }

    fn budget(&self) -> Option<BudgetConfig> {
        None
    }

    /// Tips of chains she keeps private.
    fn private_tips(&self) -> Vec<BlockId> {
        Vec::new()
    }

    fn graft_info(&self) -> Option<GraftInfo> {
        None
    }
}

/// When a withholding adversary releases her private chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Release {
    /// Never publishes anything.
    Never,
    /// Keeps racing on a private fork, even from behind, and publishes it
    /// once the public chain has moved past the fork point and the fork is
    /// strictly longer.
    Override,
}

fn default_favored() -> u8 {
    1
}

fn default_abandon_gap() -> u64 {
    24
}

/// Serializable description of a strategy; [`StrategySpec::build`] makes a
/// fresh instance per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    HonestMimic,
    Withhold {
        release: Release,
        /// Give up a private fork once it trails by more than this.
        #[serde(default = "default_abandon_gap")]
        abandon_gap: u64,
    },
    DiscardDetrimental {
        #[serde(default = "default_favored")]
        favored: u8,
        #[serde(default)]
        budget: Option<BudgetConfig>,
        /// Skip mining every `m`-th round.
        #[serde(default)]
        idle_every: Option<u64>,
    },
    PrivateChain {
        /// Rounds spent building the supply before grafting.
        supply_rounds: u64,
    },
    MajorityPower {
        desired: u8,
    },
}

impl StrategySpec {
    pub fn build(&self) -> Box<dyn Strategy> {
        match *self {
            StrategySpec::HonestMimic => Box::new(HonestMimic::default()),
            StrategySpec::Withhold {
                release,
                abandon_gap,
            } => Box::new(Withhold::new(release, abandon_gap)),
            StrategySpec::DiscardDetrimental {
                favored,
                budget,
                idle_every,
            } => Box::new(DiscardDetrimental {
                favored: favored & 1,
                budget,
                idle_every,
                own_tip: None,
            }),
            StrategySpec::PrivateChain { supply_rounds } => {
                Box::new(PrivateChain::new(supply_rounds))
            }
            StrategySpec::MajorityPower { desired } => Box::new(MajorityPower::new(desired)),
        }
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        match self {
            StrategySpec::DiscardDetrimental {
                favored,
                budget,
                idle_every,
            } => {
                if *favored > 1 {
                    v.push(("favored", format!("{favored} is not a bit")));
                }
                if let Some(b) = budget {
                    for (name, x) in [
                        ("reserve", b.reserve),
                        ("reward", b.reward),
                        ("cost_per_query", b.cost_per_query),
                    ] {
                        if !(x >= 0.0) {
                            v.push((name, format!("{x} must be non-negative")));
                        }
                    }
                }
                if matches!(idle_every, Some(m) if *m < 2) {
                    v.push(("idle_every", "must be at least 2".to_string()));
                }
            }
            StrategySpec::MajorityPower { desired } if *desired > 1 => {
                v.push(("desired", format!("{desired} is not a bit")));
            }
            _ => {}
        }
        v
    }
}

/// The adversary's preferred parent: her own latest block unless the public
/// chain is strictly higher.
fn follow_best(tree: &BlockTree, own_tip: Option<BlockId>) -> BlockId {
    let public = tree.best_published();
    match own_tip {
        Some(t) if tree.height(t) >= tree.height(public) => t,
        _ => public,
    }
}

/// Mines on the longest chain and publishes everything at once.
#[derive(Debug, Default)]
pub struct HonestMimic {
    own_tip: Option<BlockId>,
}

impl Strategy for HonestMimic {
    fn name(&self) -> &'static str {
        "honest_mimic"
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let mut parent = follow_best(ctx.tree(), self.own_tip);
        while let Some(b) = ctx.mine(parent) {
            ctx.publish(b);
            parent = b;
            self.own_tip = Some(b);
        }
    }
}

/// Publishes only blocks whose LSB is the favored bit; a detrimental block
/// is dropped and the next success retries at the same parent.
#[derive(Debug)]
pub struct DiscardDetrimental {
    favored: u8,
    budget: Option<BudgetConfig>,
    idle_every: Option<u64>,
    own_tip: Option<BlockId>,
}

impl DiscardDetrimental {
    pub fn new(favored: u8, budget: Option<BudgetConfig>) -> Self {
        DiscardDetrimental {
            favored: favored & 1,
            budget,
            idle_every: None,
            own_tip: None,
        }
    }

    pub fn idling(mut self, every: u64) -> Self {
        self.idle_every = Some(every);
        self
    }
}

impl Strategy for DiscardDetrimental {
    fn name(&self) -> &'static str {
        "discard_detrimental"
    }

    fn wants_to_mine(&mut self, round: u64) -> bool {
        match self.idle_every {
            Some(m) => round % m != 0,
            None => true,
        }
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let mut parent = follow_best(ctx.tree(), self.own_tip);
        while let Some(b) = ctx.mine(parent) {
            if (ctx.tree().get(b).symbol & 1) as u8 == self.favored {
                ctx.publish(b);
                parent = b;
                self.own_tip = Some(b);
            }
        }
    }

    fn budget(&self) -> Option<BudgetConfig> {
        self.budget
    }
}

/// Mines a private fork off the public chain.
#[derive(Debug)]
pub struct Withhold {
    release: Release,
    abandon_gap: u64,
    base: BlockId,
    private_tip: BlockId,
}

impl Withhold {
    pub fn new(release: Release, abandon_gap: u64) -> Self {
        Withhold {
            release,
            abandon_gap,
            base: 0,
            private_tip: 0,
        }
    }
}

impl Strategy for Withhold {
    fn name(&self) -> &'static str {
        "withhold"
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>) {
        while let Some(b) = ctx.mine(self.private_tip) {
            self.private_tip = b;
        }
        if self.release == Release::Never {
            return;
        }
        let tree = ctx.tree();
        let public = ctx.best_public();
        let (hp, hv, hb) = (
            tree.height(public),
            tree.height(self.private_tip),
            tree.height(self.base),
        );
        if self.private_tip == self.base {
            // Nothing withheld: move to the head of the public chain.
            if hp > hv {
                self.base = public;
                self.private_tip = public;
            }
        } else if hp > hb && hv > hp {
            ctx.publish(self.private_tip);
            self.base = self.private_tip;
        } else if hp > hv + self.abandon_gap {
            self.base = public;
            self.private_tip = public;
        }
    }

    fn private_tips(&self) -> Vec<BlockId> {
        if self.private_tip == self.base {
            Vec::new()
        } else {
            vec![self.private_tip]
        }
    }
}

/// Builds a private supply of blocks, then grafts all of it onto the best
/// honest tip in one shot and afterwards only extends chains containing
/// the graft.
#[derive(Debug)]
pub struct PrivateChain {
    supply_rounds: u64,
    supply: Vec<BlockId>,
    graft: Option<GraftInfo>,
    own_tip: Option<BlockId>,
}

impl PrivateChain {
    pub fn new(supply_rounds: u64) -> Self {
        PrivateChain {
            supply_rounds,
            supply: Vec::new(),
            graft: None,
            own_tip: None,
        }
    }
}

impl Strategy for PrivateChain {
    fn name(&self) -> &'static str {
        "private_chain"
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>) {
        match self.graft {
            None => {
                let mut parent = self.supply.last().copied().unwrap_or(0);
                while let Some(b) = ctx.mine(parent) {
                    self.supply.push(b);
                    parent = b;
                }
                if ctx.round() + 1 >= self.supply_rounds {
                    let onto = ctx.best_public();
                    let copies = ctx.graft(&self.supply, onto);
                    let first = copies.first().copied();
                    if let Some(&last) = copies.last() {
                        ctx.publish(last);
                        self.own_tip = Some(last);
                    }
                    self.graft = Some(GraftInfo {
                        first: first.unwrap_or(onto),
                        len: copies.len() as u64,
                        round: ctx.round(),
                    });
                }
            }
            Some(g) => {
                let public = ctx.best_public();
                let tree = ctx.tree();
                let contains_graft = g.len == 0 || tree.is_ancestor(g.first, public);
                let mut parent = match self.own_tip {
                    Some(t) if !contains_graft || tree.height(t) >= tree.height(public) => t,
                    _ => public,
                };
                while let Some(b) = ctx.mine(parent) {
                    ctx.publish(b);
                    parent = b;
                    self.own_tip = Some(b);
                }
            }
        }
    }

    fn private_tips(&self) -> Vec<BlockId> {
        match (self.graft, self.supply.last()) {
            (None, Some(&t)) => vec![t],
            _ => Vec::new(),
        }
    }

    fn graft_info(&self) -> Option<GraftInfo> {
        self.graft
    }
}

/// With more than half the mining power: grows private chains from the
/// agreed start until one is long enough and yields the desired bit, and
/// publishes it once it is strictly longer than the public chain.
#[derive(Debug)]
pub struct MajorityPower {
    desired: u8,
    private_tip: Option<BlockId>,
    released: Option<BlockId>,
    /// The chain tip first released; honest parties must adopt it.
    anchor: Option<BlockId>,
    restarts: u64,
}

impl MajorityPower {
    pub fn new(desired: u8) -> Self {
        MajorityPower {
            desired: desired & 1,
            private_tip: None,
            released: None,
            anchor: None,
            restarts: 0,
        }
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }
}

impl Strategy for MajorityPower {
    fn name(&self) -> &'static str {
        "majority_power"
    }

    fn act(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let Some(start) = ctx.start() else { return };
        if let Some(r) = self.released {
            // Keep the released chain ahead.
            let mut parent = r;
            while let Some(b) = ctx.mine(parent) {
                ctx.publish(b);
                parent = b;
            }
            self.released = Some(parent);
            return;
        }
        let mut tip = self.private_tip.unwrap_or(start.parent);
        while let Some(b) = ctx.mine(tip) {
            tip = b;
        }
        self.private_tip = Some(tip);
        let (n, k) = (ctx.beacon_len(), ctx.confirmations());
        let tree = ctx.tree();
        if tree.height(tip) + 1 < start.height + n + k {
            return;
        }
        let bits: Vec<u8> = tree
            .symbols_from(tip, start.height, n)
            .expect("private chain covers the window")
            .iter()
            .map(|s| (s & 1) as u8)
            .collect();
        let bit = majority(&bits).expect("n is odd");
        if bit != self.desired {
            self.private_tip = None;
            self.restarts += 1;
        } else if tree.height(tip) > tree.height(ctx.best_public()) {
            ctx.publish(tip);
            self.released = Some(tip);
            self.anchor = Some(tip);
        }
    }

    fn settled(&self, tree: &BlockTree, honest_tips: &[BlockId]) -> bool {
        match self.anchor {
            Some(a) => honest_tips.iter().all(|&t| tree.is_ancestor(a, t)),
            None => false,
        }
    }

    fn private_tips(&self) -> Vec<BlockId> {
        self.private_tip.into_iter().collect()
    }
}
