//! Deterministic bit extractors and exact worst-case bias oracles.

use std::f64::consts::{E, PI};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::fair_binomial_range;

/// Limit for exhaustive enumeration over honest inputs.
const MAX_ENUMERATED_BITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Majority,
    IteratedMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub n: usize,
}

impl ExtractorSpec {
    pub fn new(kind: ExtractorKind, n: usize) -> Result<Self> {
        check_arity(kind, n)?;
        Ok(ExtractorSpec { kind, n })
    }

    pub fn eval(&self, bits: &[u8]) -> Result<u8> {
        if bits.len() != self.n {
            return Err(Error::invalid(
                "bits",
                format!("expected {} bits, got {}", self.n, bits.len()),
            ));
        }
        match self.kind {
            ExtractorKind::Majority => majority(bits),
            ExtractorKind::IteratedMajority => iterated_majority(bits),
        }
    }
}

fn check_arity(kind: ExtractorKind, n: usize) -> Result<()> {
    match kind {
        ExtractorKind::Majority if n % 2 == 0 => Err(Error::EvenLength(n)),
        ExtractorKind::IteratedMajority if power_of_three_depth(n).is_none() => {
            Err(Error::NotPowerOfThree(n))
        }
        _ => Ok(()),
    }
}

fn power_of_three_depth(mut n: usize) -> Option<u32> {
    if n < 3 {
        return None;
    }
    let mut depth = 0;
    while n > 1 {
        if n % 3 != 0 {
            return None;
        }
        n /= 3;
        depth += 1;
    }
    Some(depth)
}

/// 1 iff at least half the bits are 1. Only odd lengths are accepted so the
/// output is a strict majority.
pub fn majority(bits: &[u8]) -> Result<u8> {
    if bits.len() % 2 == 0 {
        return Err(Error::EvenLength(bits.len()));
    }
    let ones = bits.iter().filter(|&&b| b != 0).count();
    Ok((2 * ones >= bits.len()) as u8)
}

/// Recursive ternary majority over `3^depth` leaves.
pub fn iterated_majority(bits: &[u8]) -> Result<u8> {
    if power_of_three_depth(bits.len()).is_none() {
        return Err(Error::NotPowerOfThree(bits.len()));
    }
    let mut layer: Vec<u8> = bits.iter().map(|&b| (b != 0) as u8).collect();
    while layer.len() > 1 {
        layer = layer
            .chunks_exact(3)
            .map(|c| ((c[0] + c[1] + c[2]) >= 2) as u8)
            .collect();
    }
    Ok(layer[0])
}

/// Least significant bit of a symbol from an even alphabet.
pub fn lsb(symbol: u32, d: u32) -> Result<u8> {
    if d % 2 != 0 {
        return Err(Error::OddAlphabet(d));
    }
    if symbol >= d {
        return Err(Error::invalid("symbol", format!("{symbol} >= d = {d}")));
    }
    Ok((symbol & 1) as u8)
}

/// `⌊ε(π/e)√(n−√n)⌋` before any parity adjustment.
pub fn raw_ell(n: u64, epsilon: f64) -> Result<u64> {
    if n < 2 {
        return Err(Error::invalid("n", format!("{n} < 2")));
    }
    if !(epsilon > 0.0 && epsilon <= E / PI) {
        return Err(Error::invalid(
            "epsilon",
            format!("{epsilon} is not in (0, e/pi]"),
        ));
    }
    let nf = n as f64;
    Ok((epsilon * (PI / E) * (nf - nf.sqrt()).sqrt()).floor() as u64)
}

/// Number of symbols the adversary may control while majority stays an
/// `ε/2`-extractor. An odd raw value is reduced by one.
pub fn ell_for(n: u64, epsilon: f64) -> Result<u64> {
    let l = raw_ell(n, epsilon)?;
    Ok(if l % 2 == 1 { l - 1 } else { l })
}

/// Exact largest bias of majority over `n` bits when `c` of them are set by
/// an adversary who sees the rest: `½·Pr(Bin(n−c, ½) ∈ [⌈n/2⌉−c, ⌈n/2⌉−1])`.
pub fn worst_case_majority_bias(n: u64, c: u64) -> Result<BigRational> {
    if n % 2 == 0 {
        return Err(Error::EvenLength(n as usize));
    }
    if c >= n {
        return Err(Error::invalid("c", format!("{c} >= n = {n}")));
    }
    let half_up = n.div_ceil(2) as i64;
    let range = fair_binomial_range(n - c, half_up - c as i64, half_up - 1);
    Ok(range / BigRational::from_integer(2.into()))
}

fn eval_kind(kind: ExtractorKind, bits: &[u8]) -> u8 {
    match kind {
        ExtractorKind::Majority => majority(bits).expect("arity checked"),
        ExtractorKind::IteratedMajority => iterated_majority(bits).expect("arity checked"),
    }
}

/// Probability over uniform honest inputs that the first `corrupted` inputs
/// can still change the output, i.e. that withholding them matters.
pub fn withhold_flip_probability(
    m: usize,
    kind: ExtractorKind,
    corrupted: usize,
) -> Result<BigRational> {
    check_arity(kind, m)?;
    if corrupted > m {
        return Err(Error::invalid("corrupted", format!("{corrupted} > m = {m}")));
    }
    if corrupted == 0 {
        return Ok(BigRational::zero());
    }
    let honest = m - corrupted;
    if honest > MAX_ENUMERATED_BITS || corrupted > MAX_ENUMERATED_BITS {
        return Err(Error::EnumerationTooLarge {
            states: 1u128 << m.min(127),
            limit: 1u128 << MAX_ENUMERATED_BITS,
        });
    }
    let mut bits = vec![0u8; m];
    let mut pivotal: u64 = 0;
    for h in 0..(1u64 << honest) {
        for j in 0..honest {
            bits[corrupted + j] = ((h >> j) & 1) as u8;
        }
        let mut seen = [false; 2];
        for c in 0..(1u64 << corrupted) {
            for j in 0..corrupted {
                bits[j] = ((c >> j) & 1) as u8;
            }
            seen[eval_kind(kind, &bits) as usize] = true;
            if seen[0] && seen[1] {
                break;
            }
        }
        if seen[0] && seen[1] {
            pivotal += 1;
        }
    }
    Ok(BigRational::new(pivotal.into(), (1u64 << honest).into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority(&[1, 1, 1]).unwrap(), 1);
        assert_eq!(majority(&[1, 0, 1]).unwrap(), 1);
        assert_eq!(majority(&[0, 1, 0]).unwrap(), 0);
        let mut v = vec![1u8; 8];
        v.extend([0u8; 7]);
        assert_eq!(majority(&v).unwrap(), 1);
        assert_eq!(majority(&[1, 0]), Err(Error::EvenLength(2)));
    }

    #[test]
    fn lsb_examples() {
        assert_eq!(lsb(7, 16).unwrap(), 1);
        assert_eq!(lsb(0, 16).unwrap(), 0);
        assert_eq!(lsb(1, 3), Err(Error::OddAlphabet(3)));
        let ones = (0..16).filter(|&s| lsb(s, 16).unwrap() == 1).count();
        assert_eq!(ones, 8);
    }

    #[test]
    fn ell_examples() {
        assert_eq!(raw_ell(100, 0.1).unwrap(), 1);
        assert_eq!(ell_for(100, 0.1).unwrap(), 0);
        assert_eq!(raw_ell(10_000, 0.1).unwrap(), 11);
        assert_eq!(ell_for(10_000, 0.1).unwrap(), 10);
        assert_eq!(ell_for(10_000, 1e-9).unwrap(), 0);
        assert!(ell_for(100, 0.0).is_err());
        assert!(ell_for(100, 0.9).is_err());
        assert!(ell_for(1, 0.1).is_err());
    }

    #[test]
    fn iterated_majority_examples() {
        assert_eq!(iterated_majority(&[1, 1, 0]).unwrap(), 1);
        assert_eq!(iterated_majority(&[1, 1, 0, 0, 0, 1, 1, 0, 1]).unwrap(), 1);
        assert_eq!(iterated_majority(&[0; 27]).unwrap(), 0);
        assert_eq!(iterated_majority(&[0; 6]), Err(Error::NotPowerOfThree(6)));
        assert!(ExtractorSpec::new(ExtractorKind::IteratedMajority, 1).is_err());
    }

    #[test]
    fn iterated_majority_is_balanced() {
        let ones = (0..512u32)
            .filter(|x| {
                let bits: Vec<u8> = (0..9).map(|j| ((x >> j) & 1) as u8).collect();
                iterated_majority(&bits).unwrap() == 1
            })
            .count();
        assert_eq!(ones, 256);
    }

    #[test]
    fn worst_case_examples() {
        assert!(worst_case_majority_bias(15, 0).unwrap().is_zero());
        assert_eq!(worst_case_majority_bias(3, 1).unwrap(), q(1, 4));
        let l = ell_for(15, 0.5).unwrap();
        assert!(worst_case_majority_bias(15, l).unwrap().to_f64().unwrap() <= 0.25);
        assert!(worst_case_majority_bias(4, 1).is_err());
    }

    #[test]
    fn withhold_examples() {
        assert_eq!(
            withhold_flip_probability(9, ExtractorKind::Majority, 1).unwrap(),
            q(70, 256)
        );
        assert_eq!(
            withhold_flip_probability(9, ExtractorKind::IteratedMajority, 1).unwrap(),
            q(1, 4)
        );
        assert!(withhold_flip_probability(9, ExtractorKind::Majority, 0)
            .unwrap()
            .is_zero());
        assert!(withhold_flip_probability(8, ExtractorKind::Majority, 1).is_err());
    }

    /// Brute force: for every honest word the adversary picks the best of all
    /// 2^c settings of its bits, in each direction.
    fn brute_force_bias(n: usize, c: usize) -> BigRational {
        let honest = n - c;
        let mut toward_one = 0u64;
        let mut toward_zero = 0u64;
        let mut bits = vec![0u8; n];
        for h in 0..(1u64 << honest) {
            for j in 0..honest {
                bits[c + j] = ((h >> j) & 1) as u8;
            }
            let (mut can1, mut can0) = (false, false);
            for a in 0..(1u64 << c) {
                for j in 0..c {
                    bits[j] = ((a >> j) & 1) as u8;
                }
                if majority(&bits).unwrap() == 1 {
                    can1 = true;
                } else {
                    can0 = true;
                }
            }
            toward_one += can1 as u64;
            toward_zero += can0 as u64;
        }
        let total = BigRational::from_integer((1u64 << honest).into());
        let half = q(1, 2);
        let b1 = BigRational::from_integer(toward_one.into()) / &total - &half;
        let b0 = BigRational::from_integer(toward_zero.into()) / &total - &half;
        b1.max(b0)
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for n in (1..=13).step_by(2) {
            for c in 0..=4.min(n - 1) {
                assert_eq!(
                    worst_case_majority_bias(n as u64, c as u64).unwrap(),
                    brute_force_bias(n, c),
                    "n={n} c={c}"
                );
            }
        }
    }

    #[test]
    fn extractor_guarantee_for_small_n() {
        for n in (3..=15u64).step_by(2) {
            for eps in [0.3, 0.5, 0.8] {
                let l = ell_for(n, eps).unwrap();
                let c = l.saturating_sub(1);
                let b = worst_case_majority_bias(n, c).unwrap().to_f64().unwrap();
                assert!(b <= eps / 2.0, "n={n} eps={eps} l={l} bias={b}");
            }
        }
    }

    #[test]
    fn extractor_guarantee_with_ell_controlled() {
        // The stronger reading with c = ℓ controlled coordinates also holds
        // on this grid.
        for n in (3..=15u64).step_by(2) {
            for eps in [0.3, 0.5, 0.8] {
                let l = ell_for(n, eps).unwrap();
                let b = worst_case_majority_bias(n, l).unwrap().to_f64().unwrap();
                assert!(b <= eps / 2.0, "n={n} eps={eps} l={l} bias={b}");
            }
        }
    }

    #[test]
    fn majority_is_monotone() {
        for n in (1..=15usize).step_by(2) {
            for x in 0..(1u32 << n) {
                let bits: Vec<u8> = (0..n).map(|j| ((x >> j) & 1) as u8).collect();
                if majority(&bits).unwrap() == 0 {
                    continue;
                }
                for j in 0..n {
                    if bits[j] == 0 {
                        let mut up = bits.clone();
                        up[j] = 1;
                        assert_eq!(majority(&up).unwrap(), 1);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lsb_of_uniform_even_alphabet_is_unbiased(half in 1u32..200) {
            let d = 2 * half;
            let ones = (0..d).filter(|&s| lsb(s, d).unwrap() == 1).count() as u32;
            prop_assert_eq!(ones * 2, d);
        }

        #[test]
        fn ell_is_even(n in 2u64..1_000_000, eps in 0.001f64..0.865) {
            prop_assert_eq!(ell_for(n, eps).unwrap() % 2, 0);
        }
    }
}
