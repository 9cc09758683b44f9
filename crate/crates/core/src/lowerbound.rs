//! The universal adversarial source: a resettable source that biases any
//! extractor by at least `p/12`.
//!
//! A source is `p`-resettable if each symbol can be drawn as "pick `a`
//! uniformly, keep it with some probability, otherwise replace it with a
//! fresh uniform `b`", with the reset probability never above `p`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{domain_size, index_to_word, Distribution};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// Largest domain `d^n` the adversarial source will enumerate.
pub const SOURCE_LIMIT: u128 = 1 << 22;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn int(n: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(n.into())
}

fn check_p(p: &BigRational) -> Result<()> {
    if !p.is_positive() || *p > BigRational::one() {
        return Err(Error::invalid("p", format!("{p} is not in (0, 1]")));
    }
    Ok(())
}

/// A distribution over `[d]` whose masses lie in `[(1−p)/d, (1+p)/d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDistribution {
    d: u32,
    p: BigRational,
    pmf: Vec<BigRational>,
}

impl PerturbedDistribution {
    pub fn new(p: BigRational, pmf: Vec<BigRational>) -> Result<Self> {
        let d = pmf.len() as u32;
        if d < 2 {
            return Err(Error::invalid("pmf", "alphabet size < 2"));
        }
        if p.is_negative() || p > BigRational::one() {
            return Err(Error::invalid("p", format!("{p} is not in [0, 1]")));
        }
        let total: BigRational = pmf.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        check_box(&pmf, &p)?;
        Ok(PerturbedDistribution { d, p, pmf })
    }

    pub fn uniform(d: u32) -> Self {
        PerturbedDistribution {
            d,
            p: BigRational::zero(),
            pmf: vec![rat(1, d as i64); d as usize],
        }
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn p(&self) -> &BigRational {
        &self.p
    }

    pub fn pmf(&self) -> &[BigRational] {
        &self.pmf
    }
}

fn check_box(pmf: &[BigRational], p: &BigRational) -> Result<()> {
    let d = int(pmf.len() as i64);
    let lo = (BigRational::one() - p) / &d;
    let hi = (BigRational::one() + p) / &d;
    for (a, m) in pmf.iter().enumerate() {
        if *m < lo || *m > hi {
            return Err(Error::PerturbationViolated {
                symbol: a as u32,
                mass: m.to_string(),
                bound: p.to_string(),
            });
        }
    }
    Ok(())
}

/// The keep-or-reset rule that realizes a `p/2`-perturbed distribution as
/// one step of a `p`-resettable source.
#[derive(Debug, Clone, PartialEq)]
pub struct ResettableSampler {
    d: u32,
    p: BigRational,
    u: Vec<BigRational>,
    keep_prob: Vec<BigRational>,
}

impl ResettableSampler {
    /// `x` must be `p/2`-perturbed. `u_a = Pr(a)·d − (1 − p/2)` is the mass
    /// `a` receives beyond the required minimum.
    pub fn new(x: &[BigRational], p: BigRational) -> Result<Self> {
        if p.is_negative() || p > BigRational::one() {
            return Err(Error::invalid("p", format!("{p} is not in [0, 1]")));
        }
        let half = &p / int(2);
        check_box(x, &half)?;
        let d = int(x.len() as i64);
        let base = BigRational::one() - &half;
        let u: Vec<BigRational> = x.iter().map(|m| m * &d - &base).collect();
        let keep_prob = u
            .iter()
            .map(|ua| BigRational::one() - &p + ua)
            .collect();
        Ok(ResettableSampler {
            d: x.len() as u32,
            p,
            u,
            keep_prob,
        })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn p(&self) -> &BigRational {
        &self.p
    }

    pub fn u(&self) -> &[BigRational] {
        &self.u
    }

    pub fn keep_prob(&self) -> &[BigRational] {
        &self.keep_prob
    }

    /// Probability of a reset given that `a` was drawn.
    pub fn reset_prob(&self, a: u32) -> BigRational {
        BigRational::one() - &self.keep_prob[a as usize]
    }
}

/// Sampler for a perturbed distribution with bound `p/2`; the sampler's reset
/// budget is twice the distribution's bound.
pub fn resettable_sampler(x: &PerturbedDistribution) -> Result<ResettableSampler> {
    let p = x.p() * int(2);
    ResettableSampler::new(x.pmf(), p)
}

/// Output distribution of the sampler, summed over both branches of the
/// mechanism: keep the uniform draw, or reset to a fresh uniform symbol.
pub fn exact_sampler_pmf(s: &ResettableSampler) -> Vec<BigRational> {
    let d = int(s.d as i64);
    let reset_total: BigRational = (0..s.d).map(|a| s.reset_prob(a) / &d).sum();
    (0..s.d as usize)
        .map(|c| &s.keep_prob[c] / &d + &reset_total / &d)
        .collect()
}

/// Closed form `(1 − p/2 + u_c)/d` of the same distribution.
pub fn closed_form_sampler_pmf(s: &ResettableSampler) -> Vec<BigRational> {
    let d = int(s.d as i64);
    let base = BigRational::one() - &s.p / int(2);
    s.u.iter().map(|uc| (&base + uc) / &d).collect()
}

/// The source that gives mass `(1+p/6)/d^n` to a fixed half `S` of one output
/// class of `E`, and `(1−p/6)/d^n` to everything else.
#[derive(Debug, Clone)]
pub struct AdversarialSource {
    d: u32,
    n: usize,
    p: BigRational,
    p_f64: f64,
    favored: u8,
    swapped: bool,
    in_s: Vec<bool>,
    /// `s_counts[i][prefix]`: number of words of `S` starting with the
    /// length-`i` prefix, prefixes indexed little-endian.
    s_counts: Vec<Vec<u64>>,
}

/// Builds the adversarial source for `e`. `S` is the lexicographically first
/// half (with `x1` most significant) of the larger output class of `e`.
pub fn build_adversarial_source<F>(e: F, d: u32, n: usize, p: BigRational) -> Result<AdversarialSource>
where
    F: Fn(&[u32]) -> u8,
{
    if d % 2 != 0 {
        return Err(Error::OddAlphabet(d));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    check_p(&p)?;
    let size = domain_size(d, n);
    if size > SOURCE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            states: size,
            limit: SOURCE_LIMIT,
        });
    }
    let size = size as usize;
    let outputs: Vec<u8> = (0..size)
        .map(|i| e(&index_to_word(i as u64, d, n)))
        .collect();
    let zeros = outputs.iter().filter(|&&b| b == 0).count();
    let (favored, swapped) = if 2 * zeros >= size { (0, false) } else { (1, true) };

    let mut in_s = vec![false; size];
    let mut taken = 0;
    for rank in 0..size as u64 {
        if taken == size / 2 {
            break;
        }
        let mut w = index_to_word(rank, d, n);
        w.reverse();
        let idx = crate::dist::word_to_index(&w, d) as usize;
        if outputs[idx] == favored {
            in_s[idx] = true;
            taken += 1;
        }
    }

    let mut s_counts = vec![Vec::new(); n + 1];
    s_counts[n] = in_s.iter().map(|&b| b as u64).collect();
    for i in (0..n).rev() {
        let len = domain_size(d, i) as usize;
        let mut level = vec![0u64; len];
        for (child, &c) in s_counts[i + 1].iter().enumerate() {
            level[child % len] += c;
        }
        s_counts[i] = level;
    }

    Ok(AdversarialSource {
        d,
        n,
        p_f64: p.to_f64().unwrap_or(f64::NAN),
        p,
        favored,
        swapped,
        in_s,
        s_counts,
    })
}

impl AdversarialSource {
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &BigRational {
        &self.p
    }

    /// The output label whose preimage contains `S`.
    pub fn favored(&self) -> u8 {
        self.favored
    }

    /// True when `E^{-1}(0)` had measure below ½ and labels were swapped.
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    pub fn in_s(&self, word: &[u32]) -> bool {
        self.in_s[crate::dist::word_to_index(word, self.d) as usize]
    }

    pub fn s_size(&self) -> u64 {
        self.s_counts[0][0]
    }

    pub fn mass(&self, word: &[u32]) -> BigRational {
        let q = &self.p / int(6);
        let size = int(domain_size(self.d, self.n) as i64);
        let w = if self.in_s(word) {
            BigRational::one() + q
        } else {
            BigRational::one() - q
        };
        w / size
    }

    pub fn distribution(&self) -> Result<Distribution<BigRational>> {
        let size = self.in_s.len();
        let masses = (0..size)
            .map(|i| self.mass(&index_to_word(i as u64, self.d, self.n)))
            .collect();
        Distribution::from_dense(self.d, self.n, masses)
    }

    /// `6·pd·d^n·Pr(prefix)` as an integer, where `p = pn/pd`.
    fn scaled_prefix_weight(&self, level: usize, prefix: usize) -> BigInt {
        let pn = self.p.numer();
        let pd = self.p.denom();
        let completions = BigInt::from(domain_size(self.d, self.n - level) as u64);
        let s = BigInt::from(self.s_counts[level][prefix]);
        BigInt::from(6) * pd * &completions + pn * (BigInt::from(2) * s - &completions)
    }

    /// Float conditional distribution of the next symbol after `prefix`.
    fn conditional_f64(&self, prefix: &[u32]) -> Vec<f64> {
        let i = prefix.len();
        let q = self.p_f64 / 6.0;
        let parent = crate::dist::word_to_index(prefix, self.d) as usize;
        let stride = domain_size(self.d, i) as usize;
        let completions = domain_size(self.d, self.n - i - 1) as f64;
        let weight = |s: u64| (1.0 - q) * completions + 2.0 * q * s as f64;
        let ws: Vec<f64> = (0..self.d as usize)
            .map(|a| weight(self.s_counts[i + 1][parent + a * stride]))
            .collect();
        let total: f64 = ws.iter().sum();
        ws.into_iter().map(|w| w / total).collect()
    }
}

/// Checks `1−2q ≤ (1−q)/(1+q) ≤ (1+q)/(1−q) ≤ 1+3q` exactly.
pub fn claim_chain_holds(q: &BigRational) -> bool {
    let one = BigRational::one();
    let a = &one - int(2) * q;
    let b = (&one - q) / (&one + q);
    let c = (&one + q) / (&one - q);
    let e = &one + int(3) * q;
    a <= b && b <= c && c <= e
}

/// True iff every conditional `(X_i | prefix)` of the source is
/// `p/2`-perturbed, and the inequality chain holds for `q = p/6`.
pub fn verify_perturbed_conditionals(src: &AdversarialSource) -> bool {
    if !claim_chain_holds(&(&src.p / int(6))) {
        return false;
    }
    let pn = src.p.numer();
    let pd = src.p.denom();
    let d = BigInt::from(src.d);
    let two_pd = BigInt::from(2) * pd;
    let lo = &two_pd - pn;
    let hi = &two_pd + pn;
    for i in 0..src.n {
        let stride = domain_size(src.d, i) as usize;
        for prefix in 0..stride {
            let parent = src.scaled_prefix_weight(i, prefix);
            for a in 0..src.d as usize {
                let child = src.scaled_prefix_weight(i + 1, prefix + a * stride);
                // (1 − p/2)/d ≤ child/parent ≤ (1 + p/2)/d, cross-multiplied.
                let scaled = &two_pd * &d * &child;
                if scaled < &lo * &parent || scaled > &hi * &parent {
                    return false;
                }
            }
        }
    }
    true
}

/// Same check for an arbitrary distribution: every reachable conditional is
/// `bound`-perturbed.
pub fn distribution_is_conditionally_perturbed(
    x: &Distribution<BigRational>,
    bound: &BigRational,
) -> bool {
    let (d, n) = (x.d(), x.n());
    let size = domain_size(d, n) as usize;
    let mut level: Vec<BigRational> = (0..size)
        .map(|i| x.mass(&index_to_word(i as u64, d, n)))
        .collect();
    let dq = int(d as i64);
    let lo = (BigRational::one() - bound) / &dq;
    let hi = (BigRational::one() + bound) / &dq;
    for i in (0..n).rev() {
        let len = domain_size(d, i) as usize;
        let mut parent = vec![BigRational::zero(); len];
        for (c, m) in level.iter().enumerate() {
            parent[c % len] += m;
        }
        for (pi, pm) in parent.iter().enumerate() {
            if pm.is_zero() {
                continue;
            }
            for a in 0..d as usize {
                let eta = &level[pi + a * len] / pm;
                if eta < lo || eta > hi {
                    return false;
                }
            }
        }
        level = parent;
    }
    true
}

/// Exact `|Pr(E(X) = 0) − ½|` over the source.
pub fn measured_bias<F>(e: F, src: &AdversarialSource) -> BigRational
where
    F: Fn(&[u32]) -> u8,
{
    let size = src.in_s.len();
    let q = &src.p / int(6);
    let (mut zeros_in_s, mut zeros_out) = (0i64, 0i64);
    for i in 0..size {
        if e(&index_to_word(i as u64, src.d, src.n)) == 0 {
            if src.in_s[i] {
                zeros_in_s += 1;
            } else {
                zeros_out += 1;
            }
        }
    }
    let one = BigRational::one();
    let p0 = ((&one + &q) * int(zeros_in_s) + (&one - &q) * int(zeros_out)) / int(size as i64);
    (p0 - rat(1, 2)).abs()
}

/// One run of a resettable source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResettableRun {
    pub word: Vec<u32>,
    pub resets: u32,
}

/// Supplies the conditional distribution of the next symbol.
pub trait EtaProvider {
    fn eta(&mut self, prefix: &[u32]) -> Vec<f64>;
}

/// Reads conditionals straight from the enumerated source.
pub struct ExactEta<'a>(pub &'a AdversarialSource);

impl EtaProvider for ExactEta<'_> {
    fn eta(&mut self, prefix: &[u32]) -> Vec<f64> {
        self.0.conditional_f64(prefix)
    }
}

/// Estimates conditionals by completing the prefix with uniform symbols and
/// weighting each completion `x` by `1 + p/6` if `E(x)` is the favored label
/// and `1 − p/6` otherwise.
pub struct MonteCarloEta<F> {
    pub e: F,
    pub d: u32,
    pub n: usize,
    pub p: f64,
    pub favored: u8,
    pub samples: u32,
    pub rng: SimRng,
}

impl<F: Fn(&[u32]) -> u8> EtaProvider for MonteCarloEta<F> {
    fn eta(&mut self, prefix: &[u32]) -> Vec<f64> {
        let q = self.p / 6.0;
        let mut acc = vec![0.0; self.d as usize];
        let mut x = prefix.to_vec();
        x.resize(self.n, 0);
        for _ in 0..self.samples {
            for s in x.iter_mut().skip(prefix.len()) {
                *s = self.rng.random_range(0..self.d);
            }
            let w = if (self.e)(&x) == self.favored { 1.0 + q } else { 1.0 - q };
            acc[x[prefix.len()] as usize] += w;
        }
        let total: f64 = acc.iter().sum();
        acc.into_iter().map(|w| w / total).collect()
    }
}

/// Keep probability `1 − p + u_a`, with `u_a` clamped to `[0, p]` so the
/// reset probability never exceeds `p` even for a noisy estimate.
pub fn keep_probability(eta_a: f64, d: u32, p: f64) -> f64 {
    let u = (eta_a * d as f64 - (1.0 - p / 2.0)).clamp(0.0, p);
    1.0 - p + u
}

/// Samples a word symbol by symbol: draw `a` uniformly, keep it with the
/// provider-derived probability, otherwise reset to a uniform `b`.
pub fn run_with_provider<P: EtaProvider>(
    provider: &mut P,
    d: u32,
    n: usize,
    p: f64,
    rng: &mut SimRng,
) -> ResettableRun {
    let mut word = Vec::with_capacity(n);
    let mut resets = 0;
    for _ in 0..n {
        let eta = provider.eta(&word);
        let a = rng.random_range(0..d);
        let keep = keep_probability(eta[a as usize], d, p);
        if rng.random::<f64>() < keep {
            word.push(a);
        } else {
            resets += 1;
            word.push(rng.random_range(0..d));
        }
    }
    ResettableRun { word, resets }
}

pub fn run_resettable_adversary_with(src: &AdversarialSource, rng: &mut SimRng) -> ResettableRun {
    run_with_provider(&mut ExactEta(src), src.d, src.n, src.p_f64, rng)
}

pub fn run_resettable_adversary(src: &AdversarialSource, seed: u64) -> ResettableRun {
    run_resettable_adversary_with(src, &mut rng_from_seed(seed))
}

/// Stream index used for the efficient adversary's estimation randomness,
/// kept apart from the stream that drives sampling.
const ESTIMATION_STREAM: u64 = 0x4553_5449_4d41_5445;

/// Efficient adversary: same stepping as the exact one but with Monte Carlo
/// conditionals. `favored` plays the role of the class containing `S`.
pub fn run_efficient_adversary<F>(
    e: F,
    d: u32,
    n: usize,
    p: f64,
    favored: u8,
    samples: u32,
    seed: u64,
) -> ResettableRun
where
    F: Fn(&[u32]) -> u8,
{
    let mut provider = MonteCarloEta {
        e,
        d,
        n,
        p,
        favored,
        samples: samples.max(1),
        rng: rng_from_seed(derive_seed(seed, ESTIMATION_STREAM)),
    };
    run_with_provider(&mut provider, d, n, p, &mut rng_from_seed(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Reset,
}

/// One keep-or-reset decision for drawn symbol `a` after `prefix`, using an
/// estimated conditional.
pub fn efficient_reset_decision<F>(
    e: F,
    d: u32,
    n: usize,
    prefix: &[u32],
    a: u32,
    p: f64,
    samples: u32,
    seed: u64,
) -> Decision
where
    F: Fn(&[u32]) -> u8,
{
    let mut provider = MonteCarloEta {
        e,
        d,
        n,
        p,
        favored: 0,
        samples: samples.max(1),
        rng: rng_from_seed(derive_seed(seed, ESTIMATION_STREAM)),
    };
    let eta = provider.eta(prefix);
    let keep = keep_probability(eta[a as usize], d, p);
    if rng_from_seed(seed).random::<f64>() < keep {
        Decision::Keep
    } else {
        Decision::Reset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractors::majority;
    use proptest::prelude::*;

    fn maj(w: &[u32]) -> u8 {
        let bits: Vec<u8> = w.iter().map(|&s| s as u8).collect();
        majority(&bits).unwrap()
    }

    fn parity(w: &[u32]) -> u8 {
        (w.iter().sum::<u32>() % 2) as u8
    }

    #[test]
    fn sampler_binary_example() {
        let s = ResettableSampler::new(&[rat(3, 4), rat(1, 4)], rat(1, 1)).unwrap();
        assert_eq!(s.u(), &[rat(1, 1), rat(0, 1)]);
        assert_eq!(s.keep_prob(), &[rat(1, 1), rat(0, 1)]);
        assert_eq!(exact_sampler_pmf(&s), vec![rat(3, 4), rat(1, 4)]);
    }

    #[test]
    fn sampler_uniform_target() {
        let s = resettable_sampler(&PerturbedDistribution::uniform(4)).unwrap();
        for ua in s.u() {
            assert_eq!(*ua, s.p() / int(2));
        }
        assert_eq!(exact_sampler_pmf(&s), vec![rat(1, 4); 4]);
    }

    #[test]
    fn sampler_four_symbol_example() {
        let x = vec![rat(3, 10), rat(1, 4), rat(1, 4), rat(1, 5)];
        let pd = PerturbedDistribution::new(rat(1, 5), x.clone()).unwrap();
        let s = resettable_sampler(&pd).unwrap();
        assert_eq!(*s.p(), rat(2, 5));
        assert_eq!(exact_sampler_pmf(&s), x);
        assert_eq!(closed_form_sampler_pmf(&s), x);
        for a in 0..4 {
            assert!(s.reset_prob(a) <= *s.p());
        }
    }

    #[test]
    fn sampler_rejects_out_of_box_targets() {
        let err = ResettableSampler::new(&[rat(9, 10), rat(1, 10)], rat(1, 2)).unwrap_err();
        assert!(matches!(err, Error::PerturbationViolated { symbol: 0, .. }));
    }

    #[test]
    fn identity_extractor_source() {
        let p = rat(3, 5);
        let src = build_adversarial_source(|w| w[0] as u8, 2, 1, p.clone()).unwrap();
        assert_eq!(src.mass(&[0]), (rat(1, 1) + &p / int(6)) / int(2));
        assert_eq!(src.mass(&[1]), (rat(1, 1) - &p / int(6)) / int(2));
        assert_eq!(measured_bias(|w| w[0] as u8, &src), rat(1, 20));
    }

    #[test]
    fn majority_source_bias_is_one_24th() {
        let src = build_adversarial_source(maj, 2, 3, rat(1, 2)).unwrap();
        assert_eq!(measured_bias(maj, &src), rat(1, 24));
        assert!(verify_perturbed_conditionals(&src));
        assert!(!src.swapped());
    }

    #[test]
    fn parity_source_bias() {
        let src = build_adversarial_source(parity, 2, 5, rat(3, 10)).unwrap();
        assert!(measured_bias(parity, &src) >= rat(1, 40));
    }

    #[test]
    fn tiny_p_is_nearly_uniform() {
        let p = rat(1, 1_000_000);
        let src = build_adversarial_source(maj, 2, 3, p.clone()).unwrap();
        assert_eq!(measured_bias(maj, &src), &p / int(12));
        let u = Distribution::<BigRational>::uniform(2, 3).unwrap();
        let dist = crate::dist::statistical_distance(&src.distribution().unwrap(), &u).unwrap();
        assert_eq!(dist, &p / int(12));
    }

    #[test]
    fn swapped_labels_when_zero_class_is_small() {
        let e = |w: &[u32]| (w[0] != 0 || w[1] != 0) as u8;
        let src = build_adversarial_source(e, 2, 2, rat(1, 2)).unwrap();
        assert!(src.swapped());
        assert_eq!(src.favored(), 1);
        assert_eq!(src.s_size(), 2);
        assert!(measured_bias(e, &src) >= rat(1, 24));
    }

    #[test]
    fn lexicographic_choice_of_s() {
        // Constant extractor: S is the first half in lexicographic order with
        // x1 most significant, i.e. every word with x1 = 0.
        let src = build_adversarial_source(|_| 0, 2, 3, rat(1, 2)).unwrap();
        for i in 0..8 {
            let w = index_to_word(i, 2, 3);
            assert_eq!(src.in_s(&w), w[0] == 0, "{w:?}");
        }
    }

    #[test]
    fn build_rejects_bad_inputs() {
        assert!(matches!(
            build_adversarial_source(maj, 3, 3, rat(1, 2)),
            Err(Error::OddAlphabet(3))
        ));
        assert!(matches!(
            build_adversarial_source(|_| 0, 2, 23, rat(1, 2)),
            Err(Error::EnumerationTooLarge { .. })
        ));
        assert!(build_adversarial_source(maj, 2, 3, rat(0, 1)).is_err());
    }

    #[test]
    fn conditional_checks_on_reference_distributions() {
        let u = Distribution::<BigRational>::uniform(2, 3).unwrap();
        assert!(distribution_is_conditionally_perturbed(&u, &BigRational::zero()));
        let pt = Distribution::point_mass(2, 3, vec![0, 1, 1]).unwrap();
        assert!(!distribution_is_conditionally_perturbed(&pt, &rat(1, 2)));
        let src = build_adversarial_source(maj, 2, 3, rat(1, 2)).unwrap();
        assert!(distribution_is_conditionally_perturbed(
            &src.distribution().unwrap(),
            &rat(1, 4)
        ));
    }

    #[test]
    fn resettable_runs_are_deterministic_and_bounded() {
        let src = build_adversarial_source(maj, 2, 3, rat(1, 2)).unwrap();
        for seed in 0..50 {
            let a = run_resettable_adversary(&src, seed);
            assert_eq!(a, run_resettable_adversary(&src, seed));
            assert!(a.resets as usize <= src.n());
        }
    }

    #[test]
    fn exact_injection_reproduces_the_exact_adversary() {
        let src = build_adversarial_source(maj, 2, 3, rat(1, 2)).unwrap();
        for seed in 0..50 {
            let mut provider = ExactEta(&src);
            let via_core = run_with_provider(&mut provider, 2, 3, 0.5, &mut rng_from_seed(seed));
            assert_eq!(via_core, run_resettable_adversary(&src, seed));
        }
    }

    #[test]
    fn single_sample_estimates_stay_within_budget() {
        for eta in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let keep = keep_probability(eta, 2, 0.5);
            assert!((0.5..=1.0).contains(&keep));
        }
        let r = run_efficient_adversary(maj, 2, 3, 0.5, 0, 1, 9);
        assert!(r.resets <= 3);
        let dec = efficient_reset_decision(maj, 2, 3, &[0], 1, 0.5, 1, 4);
        assert!(matches!(dec, Decision::Keep | Decision::Reset));
    }

    #[test]
    fn claim_chain_for_random_q() {
        use rand::Rng;
        let mut rng = rng_from_seed(5);
        for _ in 0..10_000 {
            let num: i64 = rng.random_range(1..=1_000_000);
            let q = rat(num, 3_000_000);
            assert!(claim_chain_holds(&q));
        }
        assert!(claim_chain_holds(&rat(1, 3)));
    }

    /// A streaming extractor: read bits until the first 1 and output the
    /// parity of its (1-based) position. Truncating after `n` symbols and
    /// answering 0 otherwise loses at most the non-halting mass.
    #[test]
    fn truncated_streaming_extractor_keeps_most_of_the_bias() {
        let eps_prime = 0.01;
        let p = rat(1, 2);
        let stream_prefix = |w: &[u32]| w.iter().position(|&s| s == 1).map(|i| ((i + 1) % 2) as u8);
        let mut n = 1;
        // Under the source each word has mass at most (1+p/6)/2^n.
        while (1.0 + 1.0 / 12.0) * 0.5f64.powi(n as i32) > eps_prime {
            n += 1;
        }
        let truncated = |w: &[u32]| stream_prefix(w).unwrap_or(0);
        let src = build_adversarial_source(truncated, 2, n, p.clone()).unwrap();
        let b_trunc = measured_bias(truncated, &src);
        assert!(b_trunc >= &p / int(12));

        // Exact bias of the untruncated extractor when symbols after n are
        // uniform: given no 1 in the first n, the first 1 is at n + G with G
        // geometric, and G is odd with probability 2/3.
        let zeros = vec![0u32; n];
        let tail = src.mass(&zeros);
        let halted_zero = src.distribution().unwrap().measure(|w| stream_prefix(w) == Some(0));
        let tail_zero = if (n + 1) % 2 == 0 { rat(2, 3) } else { rat(1, 3) };
        let stream_p0 = halted_zero + &tail * tail_zero;
        let b_stream = (stream_p0 - rat(1, 2)).abs();
        let floor = &p / int(12) - BigRational::from_float(eps_prime).unwrap();
        assert!(b_stream >= floor);
        assert!((&b_stream - &b_trunc).abs() <= tail);
    }

    #[test]
    fn every_extractor_on_two_bits_is_biased() {
        for p in [rat(1, 4), rat(1, 2), rat(1, 1)] {
            for n in 1..=2usize {
                let size = 1usize << n;
                for table in 0..(1u32 << size) {
                    let e = |w: &[u32]| ((table >> crate::dist::word_to_index(w, 2)) & 1) as u8;
                    let src = build_adversarial_source(e, 2, n, p.clone()).unwrap();
                    assert!(measured_bias(e, &src) >= &p / int(12));
                    assert!(verify_perturbed_conditionals(&src));
                }
            }
        }
    }

    #[test]
    fn random_extractors_on_three_and_four_bits_are_biased() {
        use rand::Rng;
        let mut rng = rng_from_seed(12);
        for p in [rat(1, 4), rat(1, 2), rat(1, 1)] {
            for n in 3..=4usize {
                for _ in 0..1000 {
                    let table: u32 = rng.random_range(0..(1u64 << (1 << n))) as u32;
                    let e = |w: &[u32]| ((table >> crate::dist::word_to_index(w, 2)) & 1) as u8;
                    let src = build_adversarial_source(e, 2, n, p.clone()).unwrap();
                    assert!(measured_bias(e, &src) >= &p / int(12));
                    assert!(verify_perturbed_conditionals(&src));
                }
            }
        }
    }

    fn perturbed_pmf() -> impl Strategy<Value = (u32, Vec<BigRational>, BigRational)> {
        (2u32..=8, 1i64..=100).prop_flat_map(|(d, pnum)| {
            // Half-budget p/2 = pnum/200. Each symbol gets an offset in
            // [-1, 1] in units of that half-budget, then offsets are
            // re-centred and scaled down so they sum to zero.
            prop::collection::vec(-50i64..=50, d as usize).prop_map(move |offs| {
                let half = rat(pnum, 200);
                let mean = rat(offs.iter().sum::<i64>(), d as i64);
                let centred: Vec<BigRational> = offs.iter().map(|&o| int(o) - &mean).collect();
                let max = centred
                    .iter()
                    .map(|c| c.abs())
                    .max()
                    .unwrap_or_else(BigRational::zero);
                let scale = if max.is_zero() { BigRational::zero() } else { BigRational::one() / max };
                let pmf = centred
                    .iter()
                    .map(|c| (BigRational::one() + c * &scale * &half) / int(d as i64))
                    .collect();
                (d, pmf, half * int(2))
            })
        })
    }

    proptest! {
        #[test]
        fn sampler_reproduces_any_perturbed_target((_d, pmf, p) in perturbed_pmf()) {
            let s = ResettableSampler::new(&pmf, p.clone()).unwrap();
            prop_assert_eq!(exact_sampler_pmf(&s), pmf.clone());
            prop_assert_eq!(closed_form_sampler_pmf(&s), pmf);
            for (a, ua) in s.u().iter().enumerate() {
                prop_assert!(!ua.is_negative() && *ua <= p);
                prop_assert!(s.reset_prob(a as u32) <= p);
            }
        }
    }
}
