//! Estimators, confidence intervals and exact binomial helpers.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{trial_rng, SimRng};

fn check_confidence(confidence: f64) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(
            "confidence",
            format!("{confidence} is not in (0, 1)"),
        ));
    }
    Ok(())
}

/// Two-sided Hoeffding half-width for the mean of `trials` values in [0, 1].
pub fn hoeffding_halfwidth(trials: u64, confidence: f64) -> Result<f64> {
    check_confidence(confidence)?;
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    Ok(((2.0 / (1.0 - confidence)).ln() / (2.0 * trials as f64)).sqrt())
}

/// Two-sided standard normal quantile for the given confidence.
pub fn normal_quantile(confidence: f64) -> Result<f64> {
    check_confidence(confidence)?;
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let z = normal_quantile(confidence)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Order-independent accumulator for parallel trials.
pub trait Tally: Send + Default {
    fn merge(self, other: Self) -> Self;
}

/// Counts of 0 and 1 outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitTally {
    pub zeros: u64,
    pub ones: u64,
}

impl BitTally {
    pub fn record(&mut self, bit: u8) {
        if bit == 0 {
            self.zeros += 1;
        } else {
            self.ones += 1;
        }
    }

    pub fn of(bit: u8) -> Self {
        let mut t = Self::default();
        t.record(bit);
        t
    }

    pub fn trials(&self) -> u64 {
        self.zeros + self.ones
    }

    pub fn p_zero(&self) -> f64 {
        self.zeros as f64 / self.trials().max(1) as f64
    }
}

impl Tally for BitTally {
    fn merge(self, other: Self) -> Self {
        BitTally {
            zeros: self.zeros + other.zeros,
            ones: self.ones + other.ones,
        }
    }
}

/// Counts of successes among trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Count {
    pub hits: u64,
    pub trials: u64,
}

impl Count {
    pub fn of(hit: bool) -> Self {
        Count {
            hits: hit as u64,
            trials: 1,
        }
    }

    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.trials.max(1) as f64
    }
}

impl Tally for Count {
    fn merge(self, other: Self) -> Self {
        Count {
            hits: self.hits + other.hits,
            trials: self.trials + other.trials,
        }
    }
}

/// Runs `trials` independent trials in parallel, each with its own stream
/// derived from `(seed, index)`, and merges the results.
pub fn run_trials<T, F>(trials: u64, seed: u64, f: F) -> T
where
    T: Tally,
    F: Fn(&mut SimRng, u64) -> T + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut trial_rng(seed, i), i))
        .reduce(T::default, T::merge)
}

/// Like [`run_trials`] but keeps every per-trial value, in trial order.
pub fn map_trials<T, F>(trials: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng, u64) -> T + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut trial_rng(seed, i), i))
        .collect()
}

/// Mean and sample standard error, summed in order so the result does not
/// depend on thread count.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `|Pr(out = 0) − ½|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub trials: u64,
    pub seed: u64,
    pub confidence: f64,
    pub zeros: u64,
}

impl BiasReport {
    /// Report with a Hoeffding half-width.
    pub fn from_tally(t: BitTally, seed: u64, confidence: f64) -> Result<Self> {
        let trials = t.trials();
        Ok(BiasReport {
            estimate: (t.p_zero() - 0.5).abs(),
            ci_halfwidth: hoeffding_halfwidth(trials, confidence)?,
            trials,
            seed,
            confidence,
            zeros: t.zeros,
        })
    }

    /// Confidence bounds on the bias derived from the Wilson interval on
    /// `Pr(out = 0)`.
    pub fn wilson_bias_bounds(&self) -> Result<(f64, f64)> {
        let (lo, hi) = wilson_interval(self.zeros, self.trials, self.confidence)?;
        let lower = if lo <= 0.5 && 0.5 <= hi {
            0.0
        } else {
            (lo - 0.5).abs().min((hi - 0.5).abs())
        };
        Ok((lower, (lo - 0.5).abs().max((hi - 0.5).abs())))
    }
}

/// `(e/π)/√n`, the Stirling upper bound on the central binomial mass.
pub fn stirling_majority_bound(n: u64) -> f64 {
    std::f64::consts::E / std::f64::consts::PI / (n as f64).sqrt()
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exact `C(n, ⌊n/2⌋) / 2^n`.
pub fn central_binomial_mass(n: u64) -> BigRational {
    BigRational::new(
        BigInt::from(binomial(n, n / 2)),
        BigInt::from(BigUint::one() << n as usize),
    )
}

/// Exact `Pr(lo ≤ Bin(n, ½) ≤ hi)`, empty ranges giving 0.
pub fn fair_binomial_range(n: u64, lo: i64, hi: i64) -> BigRational {
    let lo = lo.max(0);
    let hi = hi.min(n as i64);
    if lo > hi {
        return BigRational::zero();
    }
    let num = (lo..=hi).fold(BigUint::zero(), |acc, k| acc + binomial(n, k as u64));
    BigRational::new(
        BigInt::from(num),
        BigInt::from(BigUint::one() << n as usize),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    #[test]
    fn hoeffding_examples() {
        let h = hoeffding_halfwidth(10_000, 0.95).unwrap();
        assert!((h - 0.013581).abs() < 1e-5);
        let h4 = hoeffding_halfwidth(40_000, 0.95).unwrap();
        assert!((h / h4 - 2.0).abs() < 1e-12);
        assert!((hoeffding_halfwidth(1, 0.95).unwrap() - 1.3581).abs() < 1e-3);
        assert!(hoeffding_halfwidth(10, 1.0).is_err());
        assert!(hoeffding_halfwidth(10, 0.0).is_err());
        assert!(hoeffding_halfwidth(0, 0.9).is_err());
    }

    #[test]
    fn wilson_matches_closed_form() {
        let z = normal_quantile(0.95).unwrap();
        assert!((z - 1.959964).abs() < 1e-5);
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn bias_bounds_from_wilson() {
        let r = BiasReport::from_tally(BitTally { zeros: 60, ones: 40 }, 0, 0.95).unwrap();
        assert!((r.estimate - 0.1).abs() < 1e-12);
        let (lo, hi) = r.wilson_bias_bounds().unwrap();
        assert!(lo > 0.0 && lo < 0.1 && hi > 0.1);
        let r = BiasReport::from_tally(BitTally { zeros: 50, ones: 50 }, 0, 0.95).unwrap();
        assert_eq!(r.wilson_bias_bounds().unwrap().0, 0.0);
    }

    #[test]
    fn stirling_examples() {
        assert_eq!(central_binomial_mass(1), BigRational::new(1.into(), 2.into()));
        assert!((stirling_majority_bound(1) - 0.8653).abs() < 1e-4);
        assert_eq!(central_binomial_mass(2), BigRational::new(1.into(), 2.into()));
        assert!((stirling_majority_bound(2) - 0.6119).abs() < 1e-4);
        let m30 = central_binomial_mass(30).to_f64().unwrap();
        assert!((m30 - 0.1445).abs() < 1e-4);
        assert!((stirling_majority_bound(30) - 0.1580).abs() < 1e-4);
    }

    #[test]
    fn stirling_bounds_central_mass_up_to_64() {
        for n in 1..=64 {
            assert!(central_binomial_mass(n).to_f64().unwrap() <= stirling_majority_bound(n));
        }
    }

    #[test]
    fn parallel_tallies_are_schedule_independent() {
        let f = |rng: &mut SimRng, _| {
            use rand::Rng;
            BitTally::of(rng.random_range(0..2u8))
        };
        let a: BitTally = run_trials(5000, 3, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b: BitTally = pool.install(|| run_trials(5000, 3, f));
        assert_eq!(a, b);
        assert_eq!(a.trials(), 5000);
    }

    proptest! {
        #[test]
        fn binomial_range_sums_to_one(n in 0u64..40) {
            prop_assert!(fair_binomial_range(n, 0, n as i64).is_one());
        }

        #[test]
        fn wilson_contains_point_estimate(k in 0u64..200, extra in 1u64..200) {
            let n = k + extra;
            let (lo, hi) = wilson_interval(k, n, 0.95).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }
}
