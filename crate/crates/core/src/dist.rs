//! Finite distributions over words in `[d]^n` and non-oblivious symbol-fixing
//! sources.
//!
//! Words are little-endian digit vectors: `word[0]` is the first symbol `x1`.
//! Indices in a [`SymbolFixingSource`] are 0-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

/// Largest state space we are willing to enumerate.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

pub type Word = Vec<u32>;

/// Scalar used for probability masses. Implemented for `f64` (checked to a
/// 1e-12 tolerance) and `BigRational` (checked exactly).
pub trait Probability: Clone + PartialOrd + fmt::Debug + Send + Sync {
    fn zero_mass() -> Self;
    fn unit_mass() -> Self;
    fn from_ratio(num: u64, den: u64) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn abs_diff(&self, other: &Self) -> Self;
    fn half(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Whether `sum` is close enough to 1 to count as a total mass.
    fn is_unit_total(sum: &Self) -> bool;
}

impl Probability for f64 {
    fn zero_mass() -> Self {
        0.0
    }
    fn unit_mass() -> Self {
        1.0
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
    fn half(&self) -> Self {
        self / 2.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_unit_total(sum: &Self) -> bool {
        (sum - 1.0).abs() <= 1e-12
    }
}

impl Probability for BigRational {
    fn zero_mass() -> Self {
        Zero::zero()
    }
    fn unit_mass() -> Self {
        One::one()
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
    fn half(&self) -> Self {
        self / BigRational::from_integer(BigInt::from(2))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_unit_total(sum: &Self) -> bool {
        sum.is_one()
    }
}

/// `d^n` as a `u128`, saturating.
pub fn domain_size(d: u32, n: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(d as u128);
    }
    acc
}

/// Decodes `index` into a word of length `n`, `x1` the least significant digit.
pub fn index_to_word(mut index: u64, d: u32, n: usize) -> Word {
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        w.push((index % d as u64) as u32);
        index /= d as u64;
    }
    w
}

pub fn word_to_index(word: &[u32], d: u32) -> u64 {
    word.iter()
        .rev()
        .fold(0u64, |acc, &s| acc * d as u64 + s as u64)
}

/// A probability mass function over `[d]^n`. Words with no entry have mass 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<P = f64> {
    d: u32,
    n: usize,
    pmf: BTreeMap<Word, P>,
}

impl<P: Probability> Distribution<P> {
    /// Builds a distribution from sparse masses, checking every mass is in
    /// `[0, 1]`, every word is in the domain, and the total is 1.
    pub fn new(d: u32, n: usize, masses: impl IntoIterator<Item = (Word, P)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("d", format!("alphabet size {d} < 2")));
        }
        if n < 1 {
            return Err(Error::invalid("n", "word length must be at least 1"));
        }
        let mut pmf: BTreeMap<Word, P> = BTreeMap::new();
        for (w, p) in masses {
            if w.len() != n || w.iter().any(|&s| s >= d) {
                return Err(Error::InvalidDistribution(format!(
                    "word {w:?} is outside [{d}]^{n}"
                )));
            }
            if p < P::zero_mass() || p > P::unit_mass() {
                return Err(Error::InvalidDistribution(format!(
                    "mass {p:?} of {w:?} is outside [0,1]"
                )));
            }
            let e = pmf.entry(w).or_insert_with(P::zero_mass);
            *e = e.add(&p);
        }
        let total = pmf.values().fold(P::zero_mass(), |a, p| a.add(p));
        if !P::is_unit_total(&total) {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total:?}"
            )));
        }
        Ok(Distribution { d, n, pmf })
    }

    /// Dense constructor: `masses[i]` is the mass of `index_to_word(i)`.
    pub fn from_dense(d: u32, n: usize, masses: Vec<P>) -> Result<Self> {
        let size = domain_size(d, n);
        if masses.len() as u128 != size {
            return Err(Error::InvalidDistribution(format!(
                "{} masses for a domain of size {size}",
                masses.len()
            )));
        }
        Self::new(
            d,
            n,
            masses
                .into_iter()
                .enumerate()
                .map(|(i, p)| (index_to_word(i as u64, d, n), p)),
        )
    }

    pub fn uniform(d: u32, n: usize) -> Result<Self> {
        let size = domain_size(d, n);
        if size > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                states: size,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mass = P::from_ratio(1, size as u64);
        Self::from_dense(d, n, vec![mass; size as usize])
    }

    pub fn point_mass(d: u32, n: usize, word: Word) -> Result<Self> {
        Self::new(d, n, [(word, P::unit_mass())])
    }

    /// A distribution over a single bit with `Pr(0) = p0`.
    pub fn bit(p0: P) -> Result<Self> {
        let p1 = P::unit_mass().sub(&p0);
        Self::new(2, 1, [(vec![0], p0), (vec![1], p1)])
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mass(&self, word: &[u32]) -> P {
        self.pmf.get(word).cloned().unwrap_or_else(P::zero_mass)
    }

    /// Words with nonzero recorded mass, in lexicographic order.
    pub fn support(&self) -> impl Iterator<Item = (&Word, &P)> {
        self.pmf.iter().filter(|(_, p)| **p > P::zero_mass())
    }

    /// Probability of the set of words satisfying `pred`.
    pub fn measure(&self, mut pred: impl FnMut(&[u32]) -> bool) -> P {
        self.pmf
            .iter()
            .filter(|(w, _)| pred(w))
            .fold(P::zero_mass(), |a, (_, p)| a.add(p))
    }

    /// Pushes the distribution through `f`, giving a distribution over bits.
    pub fn map_to_bit(&self, mut f: impl FnMut(&[u32]) -> u8) -> Result<Distribution<P>> {
        let p0 = self.measure(|w| f(w) == 0);
        Distribution::bit(p0)
    }
}

/// `½ Σ |X(a) − Y(a)|` over the shared domain.
pub fn statistical_distance<P: Probability>(x: &Distribution<P>, y: &Distribution<P>) -> Result<P> {
    if x.d != y.d || x.n != y.n {
        return Err(Error::DomainMismatch {
            d1: x.d,
            n1: x.n,
            d2: y.d,
            n2: y.n,
        });
    }
    let keys: BTreeSet<&Word> = x.pmf.keys().chain(y.pmf.keys()).collect();
    let sum = keys
        .into_iter()
        .fold(P::zero_mass(), |acc, w| acc.add(&x.mass(w).abs_diff(&y.mass(w))));
    Ok(sum.half())
}

/// `|Pr(X = 0) − ½|` for a distribution over a single bit.
pub fn binary_bias<P: Probability>(x: &Distribution<P>) -> Result<P> {
    if x.d != 2 || x.n != 1 {
        return Err(Error::NotBinary { d: x.d, n: x.n });
    }
    Ok(x.mass(&[0]).abs_diff(&P::from_ratio(1, 2)))
}

type AdversaryFn = dyn Fn(&[u32]) -> Word + Send + Sync;

/// A non-oblivious symbol-fixing source: the coordinates outside `fixed_set`
/// are uniform over `[d]`, and the adversary sets the fixed coordinates as a
/// function of all good ones.
#[derive(Clone)]
pub struct SymbolFixingSource {
    n: usize,
    d: u32,
    fixed_set: Vec<usize>,
    good: Vec<usize>,
    adversary: Arc<AdversaryFn>,
}

impl fmt::Debug for SymbolFixingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolFixingSource")
            .field("n", &self.n)
            .field("k", &self.k())
            .field("d", &self.d)
            .field("fixed_set", &self.fixed_set)
            .finish()
    }
}

impl SymbolFixingSource {
    /// `adversary` receives the good symbols in increasing index order and
    /// must return one symbol per entry of `fixed_set`, in the same order.
    pub fn new<F>(n: usize, d: u32, fixed_set: Vec<usize>, adversary: F) -> Result<Self>
    where
        F: Fn(&[u32]) -> Word + Send + Sync + 'static,
    {
        if d < 2 {
            return Err(Error::invalid("d", format!("alphabet size {d} < 2")));
        }
        if n < 1 {
            return Err(Error::invalid("n", "word length must be at least 1"));
        }
        let set: BTreeSet<usize> = fixed_set.iter().copied().collect();
        if set.len() != fixed_set.len() {
            return Err(Error::invalid("fixed_set", "indices are not distinct"));
        }
        if let Some(&bad) = fixed_set.iter().find(|&&i| i >= n) {
            return Err(Error::invalid("fixed_set", format!("index {bad} >= n = {n}")));
        }
        let good = (0..n).filter(|i| !set.contains(i)).collect();
        Ok(SymbolFixingSource {
            n,
            d,
            fixed_set,
            good,
            adversary: Arc::new(adversary),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.n - self.fixed_set.len()
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn fixed_set(&self) -> &[usize] {
        &self.fixed_set
    }

    pub fn good_coordinates(&self) -> &[usize] {
        &self.good
    }

    /// The full word produced when the good coordinates take `good_values`.
    pub fn complete(&self, good_values: &[u32]) -> Result<Word> {
        if good_values.len() != self.good.len() {
            return Err(Error::invalid(
                "good_values",
                format!("expected {} symbols, got {}", self.good.len(), good_values.len()),
            ));
        }
        let fixed = (self.adversary)(good_values);
        if fixed.len() != self.fixed_set.len() || fixed.iter().any(|&s| s >= self.d) {
            return Err(Error::invalid(
                "adversary_fn",
                format!("returned {fixed:?} for {} fixed coordinates", self.fixed_set.len()),
            ));
        }
        let mut w = vec![0; self.n];
        for (&i, &s) in self.good.iter().zip(good_values) {
            w[i] = s;
        }
        for (&i, &s) in self.fixed_set.iter().zip(&fixed) {
            w[i] = s;
        }
        Ok(w)
    }

    pub fn sample_with(&self, rng: &mut SimRng) -> Result<Word> {
        let good: Vec<u32> = (0..self.good.len())
            .map(|_| rng.random_range(0..self.d))
            .collect();
        self.complete(&good)
    }
}

/// Exact distribution of a source: each setting of the good coordinates
/// carries mass `d^-k`.
pub fn enumerate_source(s: &SymbolFixingSource) -> Result<Distribution<BigRational>> {
    let k = s.k();
    let states = domain_size(s.d, k);
    if states > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            states,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mass = <BigRational as Probability>::from_ratio(1, states as u64);
    let mut masses = Vec::with_capacity(states as usize);
    for i in 0..states as u64 {
        let good = index_to_word(i, s.d, k);
        masses.push((s.complete(&good)?, mass.clone()));
    }
    Distribution::new(s.d, s.n, masses)
}

/// One word from the source, fully determined by `seed`.
pub fn sample_source(s: &SymbolFixingSource, seed: u64) -> Result<Word> {
    s.sample_with(&mut rng_from_seed(seed))
}
