//! Santha-Vazirani sources: distributions over bit strings, the SV condition,
//! and extremal (permuted Bernoulli) distributions built from sign-labelled
//! prefix trees.
//!
//! Bit strings are indexed most-significant-bit first: the first emitted bit
//! is the top bit of the integer index. Prefixes of an `n`-bit string are
//! stored breadth-first, so the prefix of length `len` with integer value `v`
//! lives at slot `2^len - 1 + v` (the empty prefix is slot 0).

mod decompose;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::scalar::Scalar;

pub use decompose::{
    decompose, decompose_exact, prefix_alphas, sample_bits, sample_bits_with, sample_extremal,
    ConvexDecomposition, DecompositionTerm, ExtremalSampler, MAX_ENUMERATION_BITS,
};

/// Entries of a [`ProbDist`] must sum to one within this tolerance.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Bias parameter of an SV source, `0 <= eps < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && (0.0..0.5).contains(&eps) {
            Ok(Self(eps))
        } else {
            Err(Error::InvalidEpsilon(eps))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Probability of the favoured outcome, `1/2 + eps`.
    pub fn p_plus(self) -> f64 {
        0.5 + self.0
    }

    /// Probability of the disfavoured outcome, `1/2 - eps`.
    pub fn p_minus(self) -> f64 {
        0.5 - self.0
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;
    fn try_from(eps: f64) -> Result<Self> {
        Self::new(eps)
    }
}

impl From<Epsilon> for f64 {
    fn from(eps: Epsilon) -> f64 {
        eps.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Decodes `index` into `n` bits, most significant first.
    pub fn from_index(index: usize, n: usize) -> Self {
        let bits = (0..n).map(|i| (index >> (n - 1 - i)) & 1 == 1).collect();
        Self { bits }
    }

    pub fn to_index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Joint law of `n` bits, indexed MSB-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProbDist")]
pub struct ProbDist {
    n: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawProbDist {
    n: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawProbDist> for ProbDist {
    type Error = Error;
    fn try_from(raw: RawProbDist) -> Result<Self> {
        Self::new(raw.n, raw.probs)
    }
}

impl ProbDist {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(out_of_range("n", n, "[1, 30]"));
        }
        if probs.len() != 1 << n {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries for n = {n}, got {}",
                1usize << n,
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {bad} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self { n, probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(out_of_range("n", n, "[1, 30]"));
        }
        let len = 1usize << n;
        Self::new(n, vec![1.0 / len as f64; len])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &BitString) -> f64 {
        self.probs[x.to_index()]
    }

    /// Convex combination of distributions over the same number of bits.
    pub fn mixture<'a>(terms: impl IntoIterator<Item = (f64, &'a ProbDist)>) -> Result<Self> {
        let mut n = None;
        let mut acc: Vec<f64> = Vec::new();
        for (w, d) in terms {
            match n {
                None => {
                    n = Some(d.n);
                    acc = vec![0.0; d.probs.len()];
                }
                Some(m) if m != d.n => {
                    return Err(Error::DimensionMismatch(format!("mixing {m}-bit and {}-bit laws", d.n)))
                }
                _ => {}
            }
            for (a, p) in acc.iter_mut().zip(&d.probs) {
                *a += w * p;
            }
        }
        let n = n.ok_or_else(|| Error::InvalidDistribution("empty mixture".into()))?;
        Self::new(n, acc)
    }

    /// Probability mass of every prefix, breadth-first (slot 0 is the empty prefix).
    pub fn prefix_masses(&self) -> Vec<f64> {
        prefix_masses(&self.probs, self.n)
    }
}

pub(crate) fn prefix_masses<T: Scalar>(probs: &[T], n: usize) -> Vec<T> {
    // slots 0..2^{n+1}-1; leaves occupy the last 2^n slots
    let total = (1usize << (n + 1)) - 1;
    let mut mass = vec![T::zero(); total];
    let leaf_base = (1usize << n) - 1;
    for (i, p) in probs.iter().enumerate() {
        mass[leaf_base + i] = p.clone();
    }
    for slot in (0..leaf_base).rev() {
        mass[slot] = mass[2 * slot + 1].clone() + mass[2 * slot + 2].clone();
    }
    mass
}

/// Slot of a prefix in breadth-first order.
pub fn prefix_slot(len: usize, value: usize) -> usize {
    (1usize << len) - 1 + value
}

/// Inverse of [`prefix_slot`].
pub fn prefix_of_slot(slot: usize) -> BitString {
    let len = (usize::BITS - (slot + 1).leading_zeros() - 1) as usize;
    BitString::from_index(slot + 1 - (1 << len), len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// A sign for every prefix of length `< n`; `+` means the next bit is 0 with
/// probability `p_plus`, `-` swaps the two.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtremalLabeling {
    n: usize,
    signs: Vec<Sign>,
}

impl ExtremalLabeling {
    pub fn new(n: usize, signs: Vec<Sign>) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(out_of_range("n", n, "[1, 30]"));
        }
        if signs.len() != (1 << n) - 1 {
            return Err(Error::Parse(format!(
                "{n}-bit labeling needs {} signs, got {}",
                (1usize << n) - 1,
                signs.len()
            )));
        }
        Ok(Self { n, signs })
    }

    pub fn uniform_sign(n: usize, sign: Sign) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(out_of_range("n", n, "[1, 30]"));
        }
        Ok(Self { n, signs: vec![sign; (1 << n) - 1] })
    }

    pub fn all_plus(n: usize) -> Result<Self> {
        Self::uniform_sign(n, Sign::Plus)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn sign(&self, prefix: &BitString) -> Sign {
        self.signs[prefix_slot(prefix.len(), prefix.to_index())]
    }

    pub fn set_sign(&mut self, prefix: &BitString, sign: Sign) {
        let slot = prefix_slot(prefix.len(), prefix.to_index());
        self.signs[slot] = sign;
    }

    pub(crate) fn sign_at_slot(&self, slot: usize) -> Sign {
        self.signs[slot]
    }

    /// Probabilities of the induced extremal distribution in any numeric backend.
    pub fn probs_in<T: Scalar>(&self, p_plus: &T, p_minus: &T) -> Vec<T> {
        let n = self.n;
        let mut mass = vec![T::zero(); (1 << (n + 1)) - 1];
        mass[0] = T::one();
        for slot in 0..(1usize << n) - 1 {
            let (zero, one) = match self.signs[slot] {
                Sign::Plus => (p_plus, p_minus),
                Sign::Minus => (p_minus, p_plus),
            };
            mass[2 * slot + 1] = mass[slot].clone() * zero.clone();
            mass[2 * slot + 2] = mass[slot].clone() * one.clone();
        }
        mass.split_off((1 << n) - 1)
    }
}

impl fmt::Display for ExtremalLabeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.signs {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for ExtremalLabeling {
    type Err = Error;

    /// Accepts `+` and either `-` or `−` (U+2212), breadth-first prefix order.
    fn from_str(s: &str) -> Result<Self> {
        let signs = s
            .chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' | '\u{2212}' => Ok(Sign::Minus),
                other => Err(Error::Parse(format!("unexpected sign character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let count = signs.len() + 1;
        if !count.is_power_of_two() || count < 2 {
            return Err(Error::Parse(format!("{} signs is not 2^n - 1", signs.len())));
        }
        Self::new(count.trailing_zeros() as usize, signs)
    }
}

impl Serialize for ExtremalLabeling {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtremalLabeling {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Product distribution where every bit is 0 with probability `p_plus`.
pub fn bernoulli_distribution(n: usize, eps: Epsilon) -> Result<ProbDist> {
    extremal_distribution(&ExtremalLabeling::all_plus(n)?, eps)
}

pub fn extremal_distribution(lab: &ExtremalLabeling, eps: Epsilon) -> Result<ProbDist> {
    let probs = lab.probs_in(&eps.p_plus(), &eps.p_minus());
    ProbDist::new(lab.n, probs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvReport {
    pub pass: bool,
    /// Prefix whose conditional lies furthest from 1/2 (`None` if every
    /// prefix has zero mass).
    pub worst_prefix: Option<String>,
    /// `P(next bit = 0 | worst_prefix)`.
    pub worst_conditional: f64,
}

/// Checks `p_minus - tol <= P(next = 0 | w) <= p_plus + tol` for every prefix
/// `w` of positive probability.
pub fn verify_sv(dist: &ProbDist, eps: Epsilon, tol: f64) -> SvReport {
    let mass = dist.prefix_masses();
    // a few ulps absorb rounding in products like (m * p) / m
    let guard = tol + 4.0 * f64::EPSILON;
    let (lo, hi) = (eps.p_minus() - guard, eps.p_plus() + guard);
    let mut pass = true;
    let mut worst: Option<(usize, f64)> = None;
    for slot in 0..(1usize << dist.n) - 1 {
        if mass[slot] <= 0.0 {
            continue;
        }
        let cond = mass[2 * slot + 1] / mass[slot];
        if cond < lo || cond > hi {
            pass = false;
        }
        let dev = (cond - 0.5).abs();
        if worst.is_none_or(|(_, c)| dev > (c - 0.5).abs()) {
            worst = Some((slot, cond));
        }
    }
    SvReport {
        pass,
        worst_prefix: worst.map(|(slot, _)| prefix_of_slot(slot).to_string()),
        worst_conditional: worst.map_or(0.5, |(_, c)| c),
    }
}

/// True iff the sorted entries match the sorted Bernoulli(`p_plus`) entries within `tol`.
pub fn is_permutation_of_bernoulli(dist: &ProbDist, eps: Epsilon, tol: f64) -> bool {
    let Ok(reference) = bernoulli_distribution(dist.n, eps) else {
        return false;
    };
    let mut a = dist.probs.clone();
    let mut b = reference.probs;
    a.sort_by(|x, y| y.total_cmp(x));
    b.sort_by(|x, y| y.total_cmp(x));
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
}
