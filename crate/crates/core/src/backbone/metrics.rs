//! Chain-level measurements: quality, bankruptcy windows, fork depth.

use std::f64::consts::{E, PI};

use super::tree::{AnnotatedChain, BlockId, BlockTree};
use super::ExecutionTrace;
use crate::error::{Error, Result};
use crate::extractors::raw_ell;

/// Minimum over all length-`window` windows of the fraction of honest
/// blocks. Genesis is not counted.
pub fn chain_quality(chain: &AnnotatedChain, window: usize) -> Result<f64> {
    let flags = chain.adversarial.get(1..).unwrap_or(&[]);
    if window == 0 || flags.len() < window {
        return Err(Error::invalid(
            "window",
            format!("{window} is zero or exceeds chain length {}", flags.len()),
        ));
    }
    let mut adv = flags[..window].iter().filter(|&&a| a).count();
    let mut worst = adv;
    for i in window..flags.len() {
        adv += flags[i] as usize;
        adv -= flags[i - window] as usize;
        worst = worst.max(adv);
    }
    Ok(1.0 - worst as f64 / window as f64)
}

/// True iff `chain` holds `window` consecutive blocks starting at `b` of
/// which at most `ell` are adversarial.
pub fn bankruptcy_predicate(chain: &AnnotatedChain, b: BlockId, ell: u64, window: u64) -> bool {
    let Some(pos) = chain.position(b) else {
        return false;
    };
    let end = pos + window as usize;
    if end > chain.len() {
        return false;
    }
    chain.adversarial[pos..end].iter().filter(|&&a| a).count() as u64 <= ell
}

/// Same predicate evaluated directly on the tree for the chain ending at
/// `tip`.
pub fn predicate_on_tree(tree: &BlockTree, tip: BlockId, b: BlockId, ell: u64, window: u64) -> bool {
    if window == 0 {
        return tree.is_ancestor(b, tip);
    }
    let last = tree.height(b) + window - 1;
    let Some(mut cur) = tree.ancestor_at(tip, last) else {
        return false;
    };
    let mut adv = 0;
    loop {
        adv += tree.get(cur).creator.is_adversary() as u64;
        if cur == b {
            return adv <= ell;
        }
        if tree.height(cur) <= tree.height(b) {
            return false;
        }
        cur = tree.get(cur).parent.expect("above genesis");
    }
}

/// Earliest recorded round at which every honest party's adopted chain
/// satisfies the bankruptcy predicate for `b`.
pub fn detect_bankruptcy_event(
    trace: &ExecutionTrace,
    b: BlockId,
    ell: u64,
    window: u64,
) -> Option<u64> {
    let tree = &trace.tree;
    trace.rounds.iter().find_map(|r| {
        r.tips
            .iter()
            .all(|&t| predicate_on_tree(tree, t, b, ell, window))
            .then_some(r.round)
    })
}

/// `(ℓ, L)` with `ℓ = ⌊(ε/2)(π/e)√(n−√n)⌋` and `L = ⌈2(1−δ/3)⁻¹λℓ⌉`.
pub fn upbound2_params(epsilon: f64, n: u64, lambda: f64, delta: f64) -> Result<(u64, u64)> {
    if !(epsilon > 0.0 && epsilon <= E / PI) {
        return Err(Error::invalid("epsilon", format!("{epsilon} is not in (0, e/pi]")));
    }
    let ell = raw_ell(n, epsilon / 2.0)?;
    if !(lambda >= 1.0) {
        return Err(Error::invalid("lambda", format!("{lambda} < 1")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("{delta} is not in (0, 1)")));
    }
    let big_l = (2.0 * lambda * ell as f64 / (1.0 - delta / 3.0) - 1e-9).ceil() as u64;
    Ok((ell, big_l))
}

/// Left side of the binding-budget condition
/// `R2 + maxprofits + ℓ(1−δ/3)(1/λ')·w_β` with `λ' = 2λ` and
/// `w_β = ½(1/λ)(1−δ/3)·x − y_β`. The adversary is priced out when it is
/// negative.
pub fn binding_budget_lhs(
    reserve: f64,
    maxprofits: f64,
    ell: u64,
    delta: f64,
    lambda: f64,
    x: f64,
    y_beta: f64,
) -> f64 {
    let shrink = 1.0 - delta / 3.0;
    let w_beta = 0.5 * shrink * x / lambda - y_beta;
    reserve + maxprofits + ell as f64 * shrink / (2.0 * lambda) * w_beta
}

/// How far `a` must be cut back before it is a prefix of `b`.
pub fn prefix_gap(tree: &BlockTree, a: BlockId, b: BlockId) -> u64 {
    tree.height(a) - tree.height(tree.lca(a, b))
}

/// Largest prefix gap among honest tips this round, and from last round's
/// tips to this round's.
pub fn fork_depth(tree: &BlockTree, current: &[BlockId], previous: &[BlockId]) -> u64 {
    let mut cur: Vec<BlockId> = current.to_vec();
    cur.sort_unstable();
    cur.dedup();
    let mut prev: Vec<BlockId> = previous.to_vec();
    prev.sort_unstable();
    prev.dedup();
    let mut depth = 0;
    for (i, &a) in cur.iter().enumerate() {
        for &b in &cur[i + 1..] {
            depth = depth.max(prefix_gap(tree, a, b)).max(prefix_gap(tree, b, a));
        }
    }
    for &a in &prev {
        for &b in &cur {
            if a != b {
                depth = depth.max(prefix_gap(tree, a, b));
            }
        }
    }
    depth
}
