//! Convex decomposition of SV distributions into extremal labelings.
//!
//! Every prefix `w` contributes an independent two-way split: the conditional
//! law of the next bit is `alpha(w) * (p+, p-) + (1 - alpha(w)) * (p-, p+)`
//! with `alpha(w) = (P(0|w) - p-) / (p+ - p-)`. A labeling's weight is the
//! product of its per-prefix choices, so the decomposition can be enumerated
//! (small `n`) or sampled lazily (any `n`).

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{prefix_masses, prefix_of_slot, BitString, Epsilon, ExtremalLabeling, ProbDist, Sign};
use crate::error::{out_of_range, Error, Result};
use crate::scalar::Scalar;

/// Full enumeration has up to `2^(2^n - 1)` terms.
pub const MAX_ENUMERATION_BITS: usize = 4;

/// Floating-point slack allowed when checking conditionals before decomposing.
const FLOAT_SV_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerm {
    pub weight: f64,
    #[serde(rename = "signs")]
    pub labeling: ExtremalLabeling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexDecomposition {
    pub eps: Epsilon,
    pub terms: Vec<DecompositionTerm>,
}

impl ConvexDecomposition {
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn n(&self) -> Option<usize> {
        self.terms.first().map(|t| t.labeling.n())
    }

    /// Weighted mixture of the extremal distributions.
    pub fn reconstruct(&self) -> Result<ProbDist> {
        let n = self.n().ok_or_else(|| Error::InvalidDistribution("empty decomposition".into()))?;
        let mut acc = vec![0.0; 1 << n];
        for term in &self.terms {
            if term.labeling.n() != n {
                return Err(Error::DimensionMismatch("labelings with different n".into()));
            }
            let probs = term.labeling.probs_in(&self.eps.p_plus(), &self.eps.p_minus());
            for (a, p) in acc.iter_mut().zip(probs) {
                *a += term.weight * p;
            }
        }
        ProbDist::new(n, acc)
    }

    pub fn weight_of(&self, labeling: &ExtremalLabeling) -> f64 {
        self.terms
            .iter()
            .filter(|t| &t.labeling == labeling)
            .map(|t| t.weight)
            .sum()
    }
}

/// Per-prefix mixing coefficient `alpha(w)` in breadth-first order.
///
/// Zero-mass prefixes get `alpha = 1`. Conditionals outside
/// `[p- - slack, p+ + slack]` are rejected; survivors are clamped into `[0, 1]`.
pub fn prefix_alphas<T: Scalar>(probs: &[T], n: usize, p_plus: &T, p_minus: &T, slack: &T) -> Result<Vec<T>> {
    let spread = p_plus.clone() - p_minus.clone();
    if spread <= T::zero() {
        return Err(Error::DegenerateEpsilon);
    }
    let mass = prefix_masses(probs, n);
    let lo = p_minus.clone() - slack.clone();
    let hi = p_plus.clone() + slack.clone();
    (0..(1usize << n) - 1)
        .map(|slot| {
            if mass[slot] <= T::zero() {
                return Ok(T::one());
            }
            let cond = mass[2 * slot + 1].clone() / mass[slot].clone();
            if cond < lo || cond > hi {
                return Err(Error::SvViolation {
                    prefix: prefix_of_slot(slot).to_string(),
                    conditional: cond.approx(),
                });
            }
            let alpha = (cond - p_minus.clone()) / spread.clone();
            Ok(if alpha < T::zero() {
                T::zero()
            } else if alpha > T::one() {
                T::one()
            } else {
                alpha
            })
        })
        .collect()
}

/// Enumerates every labeling with positive product weight.
fn enumerate_terms<T: Scalar>(n: usize, alphas: &[T]) -> Vec<(T, ExtremalLabeling)> {
    let mut partial: Vec<(T, Vec<Sign>)> = vec![(T::one(), Vec::with_capacity(alphas.len()))];
    for alpha in alphas {
        let beta = T::one() - alpha.clone();
        let mut next = Vec::with_capacity(partial.len() * 2);
        for (w, signs) in partial {
            if *alpha > T::zero() {
                let mut s = signs.clone();
                s.push(Sign::Plus);
                next.push((w.clone() * alpha.clone(), s));
            }
            if beta > T::zero() {
                let mut s = signs;
                s.push(Sign::Minus);
                next.push((w * beta.clone(), s));
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(|(w, signs)| (w, ExtremalLabeling { n, signs }))
        .collect()
}

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_BITS {
        return Err(out_of_range("n", n, "[1, 4] for full enumeration"));
    }
    Ok(())
}

/// Decomposes an SV distribution into weighted extremal labelings (`n <= 4`).
pub fn decompose(dist: &ProbDist, eps: Epsilon) -> Result<ConvexDecomposition> {
    check_enumerable(dist.n())?;
    if eps.value() == 0.0 {
        return Err(Error::DegenerateEpsilon);
    }
    let alphas = prefix_alphas(dist.probs(), dist.n(), &eps.p_plus(), &eps.p_minus(), &FLOAT_SV_SLACK)?;
    let terms = enumerate_terms(dist.n(), &alphas)
        .into_iter()
        .map(|(weight, labeling)| DecompositionTerm { weight, labeling })
        .collect();
    Ok(ConvexDecomposition { eps, terms })
}

/// Exact rational decomposition: no slack, weights are exact products.
pub fn decompose_exact(probs: &[BigRational], eps: &BigRational) -> Result<Vec<(BigRational, ExtremalLabeling)>> {
    let n = probs.len().trailing_zeros() as usize;
    if !probs.len().is_power_of_two() || n == 0 {
        return Err(Error::InvalidDistribution(format!("{} entries is not 2^n", probs.len())));
    }
    check_enumerable(n)?;
    let half = <BigRational as Scalar>::half();
    let zero = BigRational::from_integer(0.into());
    if *eps <= zero || *eps >= half {
        return Err(if *eps == zero {
            Error::DegenerateEpsilon
        } else {
            Error::InvalidEpsilon(eps.approx())
        });
    }
    if probs.iter().any(|p| *p < zero) || probs.iter().cloned().sum::<BigRational>() != BigRational::from_integer(1.into()) {
        return Err(Error::InvalidDistribution("entries must be nonnegative and sum to 1".into()));
    }
    let p_plus = half.clone() + eps.clone();
    let p_minus = half - eps.clone();
    let alphas = prefix_alphas(probs, n, &p_plus, &p_minus, &zero)?;
    Ok(enumerate_terms(n, &alphas))
}

/// Draws labelings from the decomposition without enumerating it.
#[derive(Debug, Clone)]
pub struct ExtremalSampler {
    n: usize,
    eps: Epsilon,
    alphas: Vec<f64>,
}

impl ExtremalSampler {
    pub fn new(dist: &ProbDist, eps: Epsilon) -> Result<Self> {
        if eps.value() == 0.0 {
            return Err(Error::DegenerateEpsilon);
        }
        let alphas = prefix_alphas(dist.probs(), dist.n(), &eps.p_plus(), &eps.p_minus(), &FLOAT_SV_SLACK)?;
        Ok(Self { n: dist.n(), eps, alphas })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ExtremalLabeling {
        let signs = self
            .alphas
            .iter()
            .map(|&a| if rng.random_bool(a) { Sign::Plus } else { Sign::Minus })
            .collect();
        ExtremalLabeling { n: self.n, signs }
    }

    /// Samples only the signs on the realized path and returns the bits.
    ///
    /// Signs of distinct prefixes are independent, so this has the same law
    /// as `sample_bits(&self.sample(rng), ..)`.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let (p_plus, p_minus) = (self.eps.p_plus(), self.eps.p_minus());
        let mut slot = 0usize;
        for _ in 0..self.n {
            let p_zero = if rng.random_bool(self.alphas[slot]) { p_plus } else { p_minus };
            let bit = !rng.random_bool(p_zero);
            slot = 2 * slot + 1 + bit as usize;
        }
        slot + 1 - (1 << self.n)
    }
}

pub fn sample_extremal(dist: &ProbDist, eps: Epsilon, seed: u64) -> Result<ExtremalLabeling> {
    let sampler = ExtremalSampler::new(dist, eps)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

pub fn sample_bits(lab: &ExtremalLabeling, eps: Epsilon, seed: u64) -> BitString {
    sample_bits_with(lab, eps, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Walks the prefix tree: bit is 0 with probability `p+` under `+`, `p-` under `-`.
pub fn sample_bits_with<R: Rng + ?Sized>(lab: &ExtremalLabeling, eps: Epsilon, rng: &mut R) -> BitString {
    let mut slot = 0usize;
    let mut bits = Vec::with_capacity(lab.n());
    for _ in 0..lab.n() {
        let p_zero = match lab.sign_at_slot(slot) {
            Sign::Plus => eps.p_plus(),
            Sign::Minus => eps.p_minus(),
        };
        let bit = !rng.random_bool(p_zero);
        bits.push(bit);
        slot = 2 * slot + 1 + bit as usize;
    }
    BitString::new(bits)
}
