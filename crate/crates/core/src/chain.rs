//! Boxes `P(a, b | x, y)` for the two-party chained Bell scenario with `N`
//! binary-outcome settings per party.
//!
//! The chain consists of the `2N` pairs with `x = y` or `x = y + 1 (mod N)`.
//! They are ordered `(0,0), (1,0), (1,1), (2,1), ..., (N-1,N-1), (0,N-1)`, so
//! the pair whose Bell term rewards anti-correlation is always the last one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};

/// Largest `N` for exhaustive deterministic-strategy enumeration.
pub const MAX_LHV_SETTINGS: usize = 8;

/// Per-setting-pair normalisation tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainScenario {
    n_settings: usize,
}

impl ChainScenario {
    pub fn new(n_settings: usize) -> Result<Self> {
        if n_settings < 2 {
            return Err(out_of_range("N", n_settings, "N >= 2"));
        }
        Ok(Self { n_settings })
    }

    pub fn n_settings(self) -> usize {
        self.n_settings
    }

    /// `pi x / N`.
    pub fn alice_angle(self, x: usize) -> f64 {
        PI * x as f64 / self.n_settings as f64
    }

    /// `pi (y + 1/2) / N`.
    pub fn bob_angle(self, y: usize) -> f64 {
        PI * (y as f64 + 0.5) / self.n_settings as f64
    }

    pub fn pair_count(self) -> usize {
        2 * self.n_settings
    }

    /// Chain pair at position `k` in the canonical order.
    pub fn pair(self, k: usize) -> (usize, usize) {
        let y = k / 2;
        if k.is_multiple_of(2) {
            (y, y)
        } else {
            ((y + 1) % self.n_settings, y)
        }
    }

    pub fn pairs(self) -> impl Iterator<Item = (usize, usize)> {
        (0..self.pair_count()).map(move |k| self.pair(k))
    }

    /// Position of `(x, y)` in the chain, if it is a chain pair.
    pub fn pair_index(self, x: usize, y: usize) -> Option<usize> {
        if x == y {
            Some(2 * y)
        } else if x == (y + 1) % self.n_settings {
            Some(2 * y + 1)
        } else {
            None
        }
    }

    /// The pair `(0, N-1)` whose term counts correlated outcomes.
    pub fn is_anticorrelated_pair(self, x: usize, y: usize) -> bool {
        x == 0 && y == self.n_settings - 1
    }

    /// Indicator of the Bell term for outcomes `(a, b)` on chain pair `(x, y)`.
    pub fn term_fails(self, x: usize, y: usize, a: u8, b: u8) -> bool {
        if self.is_anticorrelated_pair(x, y) {
            a == b
        } else {
            a != b
        }
    }
}

/// Outcome table indexed `[x][y][a][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainBox {
    scenario: ChainScenario,
    table: Vec<[[f64; 2]; 2]>,
}

impl ChainBox {
    /// Validates shape, nonnegativity and per-slice normalisation.
    pub fn new(n_settings: usize, table: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        let scenario = ChainScenario::new(n_settings)?;
        if table.len() != n_settings * n_settings {
            return Err(Error::DimensionMismatch(format!(
                "{} slices for N = {n_settings}",
                table.len()
            )));
        }
        for (i, slice) in table.iter().enumerate() {
            let entries = slice.iter().flatten();
            if entries.clone().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidDistribution(format!("negative entry in slice {i}")));
            }
            let total: f64 = entries.sum();
            if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "slice (x={}, y={}) sums to {total}",
                    i / n_settings,
                    i % n_settings
                )));
            }
        }
        Ok(Self { scenario, table })
    }

    fn from_fn(scenario: ChainScenario, f: impl Fn(usize, usize) -> [[f64; 2]; 2]) -> Self {
        let n = scenario.n_settings;
        let table = (0..n * n).map(|i| f(i / n, i % n)).collect();
        Self { scenario, table }
    }

    pub fn scenario(&self) -> ChainScenario {
        self.scenario
    }

    pub fn n_settings(&self) -> usize {
        self.scenario.n_settings
    }

    pub fn slice(&self, x: usize, y: usize) -> &[[f64; 2]; 2] {
        &self.table[x * self.n_settings() + y]
    }

    pub fn prob(&self, a: u8, b: u8, x: usize, y: usize) -> f64 {
        self.slice(x, y)[a as usize][b as usize]
    }

    pub fn prob_xor(&self, parity: u8, x: usize, y: usize) -> f64 {
        let s = self.slice(x, y);
        if parity == 0 {
            s[0][0] + s[1][1]
        } else {
            s[0][1] + s[1][0]
        }
    }

    /// `P(a = 0 | x)` as seen from slice `(x, y)`.
    pub fn alice_zero(&self, x: usize, y: usize) -> f64 {
        let s = self.slice(x, y);
        s[0][0] + s[0][1]
    }

    pub fn bob_zero(&self, x: usize, y: usize) -> f64 {
        let s = self.slice(x, y);
        s[0][0] + s[1][0]
    }

    /// Probability that the Bell term of chain pair `(x, y)` is not satisfied.
    pub fn term_value(&self, x: usize, y: usize) -> f64 {
        if self.scenario.is_anticorrelated_pair(x, y) {
            self.prob_xor(0, x, y)
        } else {
            self.prob_xor(1, x, y)
        }
    }
}

impl Serialize for ChainBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n_settings();
        let nested: Vec<Vec<[[f64; 2]; 2]>> = (0..n).map(|x| (0..n).map(|y| *self.slice(x, y)).collect()).collect();
        RawBox { n_settings: n, table: nested }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChainBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawBox::deserialize(d)?;
        if raw.table.len() != raw.n_settings || raw.table.iter().any(|row| row.len() != raw.n_settings) {
            return Err(serde::de::Error::custom("table must be N x N"));
        }
        ChainBox::new(raw.n_settings, raw.table.into_iter().flatten().collect()).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    #[serde(rename = "N")]
    n_settings: usize,
    table: Vec<Vec<[[f64; 2]; 2]>>,
}

/// Probability over the `2N` chain pairs, in [`ChainScenario::pair`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSettings")]
pub struct SettingsDistribution {
    #[serde(rename = "N")]
    n_settings: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSettings {
    #[serde(rename = "N")]
    n_settings: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawSettings> for SettingsDistribution {
    type Error = Error;
    fn try_from(raw: RawSettings) -> Result<Self> {
        Self::new(raw.n_settings, raw.probs)
    }
}

impl SettingsDistribution {
    pub fn new(n_settings: usize, probs: Vec<f64>) -> Result<Self> {
        ChainScenario::new(n_settings)?;
        if probs.len() != 2 * n_settings {
            return Err(Error::DimensionMismatch(format!(
                "{} pair probabilities for N = {n_settings}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative pair probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("pair probabilities sum to {total}")));
        }
        Ok(Self { n_settings, probs })
    }

    pub fn uniform(n_settings: usize) -> Result<Self> {
        Self::new(n_settings, vec![1.0 / (2 * n_settings) as f64; 2 * n_settings])
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Box from measuring `|phi+>` at angles `pi x / N` (Alice) and `pi (y + 1/2) / N` (Bob).
pub fn build_quantum_box(n_settings: usize) -> Result<ChainBox> {
    let sc = ChainScenario::new(n_settings)?;
    Ok(ChainBox::from_fn(sc, |x, y| {
        let half = 0.5 * (sc.alice_angle(x) - sc.bob_angle(y));
        let same = 0.5 * half.cos().powi(2);
        let diff = 0.5 * half.sin().powi(2);
        [[same, diff], [diff, same]]
    }))
}

/// Uniform-marginal box with `a XOR b = parity(x, y)` deterministically.
pub fn parity_box(n_settings: usize, parity: impl Fn(usize, usize) -> bool) -> Result<ChainBox> {
    let sc = ChainScenario::new(n_settings)?;
    Ok(ChainBox::from_fn(sc, |x, y| {
        if parity(x, y) {
            [[0.0, 0.5], [0.5, 0.0]]
        } else {
            [[0.5, 0.0], [0.0, 0.5]]
        }
    }))
}

/// Chain PR box: perfect correlation on every chain pair but `(0, N-1)`,
/// perfect anti-correlation there; off-chain pairs anti-correlate iff `x < y`.
pub fn chain_pr_box(n_settings: usize) -> Result<ChainBox> {
    parity_box(n_settings, |x, y| x < y)
}

/// Local deterministic box `a = alice[x]`, `b = bob[y]`.
pub fn deterministic_box(alice: &[u8], bob: &[u8]) -> Result<ChainBox> {
    if alice.len() != bob.len() {
        return Err(Error::DimensionMismatch(format!(
            "Alice has {} settings, Bob {}",
            alice.len(),
            bob.len()
        )));
    }
    if alice.iter().chain(bob).any(|&o| o > 1) {
        return Err(Error::InvalidDistribution("outcomes must be 0 or 1".into()));
    }
    let sc = ChainScenario::new(alice.len())?;
    Ok(ChainBox::from_fn(sc, |x, y| {
        let mut slice = [[0.0; 2]; 2];
        slice[alice[x] as usize][bob[y] as usize] = 1.0;
        slice
    }))
}

/// Unweighted chained Bell expression; local boxes score at least 1.
pub fn bell_value_raw(bx: &ChainBox) -> f64 {
    bx.scenario().pairs().map(|(x, y)| bx.term_value(x, y)).sum()
}

/// Bell expression with each chain term weighted by its settings probability.
pub fn bell_value_weighted(bx: &ChainBox, sd: &SettingsDistribution) -> Result<f64> {
    if bx.n_settings() != sd.n_settings() {
        return Err(Error::DimensionMismatch(format!(
            "box has N = {}, settings N = {}",
            bx.n_settings(),
            sd.n_settings()
        )));
    }
    Ok(bx
        .scenario()
        .pairs()
        .zip(sd.probs())
        .map(|((x, y), w)| w * bx.term_value(x, y))
        .sum())
}

/// Bit mask over chain positions of the terms a deterministic strategy fails.
fn failed_terms(sc: ChainScenario, alice: usize, bob: usize) -> impl Iterator<Item = usize> {
    sc.pairs().enumerate().filter_map(move |(k, (x, y))| {
        let a = ((alice >> x) & 1) as u8;
        let b = ((bob >> y) & 1) as u8;
        sc.term_fails(x, y, a, b).then_some(k)
    })
}

fn check_enumerable(n_settings: usize) -> Result<ChainScenario> {
    let sc = ChainScenario::new(n_settings)?;
    if n_settings > MAX_LHV_SETTINGS {
        return Err(out_of_range("N", n_settings, "[2, 8] for enumeration"));
    }
    Ok(sc)
}

/// Minimum raw Bell value over all `2^N x 2^N` deterministic strategies.
pub fn lhv_minimum(n_settings: usize) -> Result<f64> {
    let sc = check_enumerable(n_settings)?;
    let strategies = 1usize << n_settings;
    let best = (0..strategies)
        .flat_map(|a| (0..strategies).map(move |b| (a, b)))
        .map(|(a, b)| failed_terms(sc, a, b).count())
        .min()
        .expect("at least one strategy");
    Ok(best as f64)
}

/// Minimum weighted Bell value over deterministic strategies.
pub fn weighted_lhv_minimum(n_settings: usize, sd: &SettingsDistribution) -> Result<f64> {
    let sc = check_enumerable(n_settings)?;
    if sd.n_settings() != n_settings {
        return Err(Error::DimensionMismatch("settings distribution has a different N".into()));
    }
    let strategies = 1usize << n_settings;
    let best = (0..strategies)
        .flat_map(|a| (0..strategies).map(move |b| (a, b)))
        .map(|(a, b)| failed_terms(sc, a, b).map(|k| sd.probs()[k]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Alice's marginals must not depend on `y`, Bob's not on `x`.
pub fn check_no_signaling(bx: &ChainBox, tol: f64) -> bool {
    let n = bx.n_settings();
    let alice_ok = (0..n).all(|x| {
        let first = bx.alice_zero(x, 0);
        (1..n).all(|y| (bx.alice_zero(x, y) - first).abs() <= tol)
    });
    let bob_ok = (0..n).all(|y| {
        let first = bx.bob_zero(0, y);
        (1..n).all(|x| (bx.bob_zero(x, y) - first).abs() <= tol)
    });
    alice_ok && bob_ok
}

/// Largest `|P(outcome = 0 | setting) - 1/2|` over both parties and all settings.
pub fn box_output_bias(bx: &ChainBox) -> f64 {
    let n = bx.n_settings();
    (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .flat_map(|(x, y)| [bx.alice_zero(x, y), bx.bob_zero(x, y)])
        .map(|p| (p - 0.5).abs())
        .fold(0.0, f64::max)
}

/// Convex combination of boxes sharing `N`.
pub fn mix_boxes(terms: &[(f64, &ChainBox)]) -> Result<ChainBox> {
    let (_, first) = terms.first().ok_or_else(|| Error::InvalidDistribution("empty mixture".into()))?;
    let n = first.n_settings();
    if terms.iter().any(|(w, _)| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution("mixture weights must be nonnegative".into()));
    }
    let total: f64 = terms.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("mixture weights sum to {total}")));
    }
    if terms.iter().any(|(_, b)| b.n_settings() != n) {
        return Err(Error::DimensionMismatch("boxes with different N".into()));
    }
    let mut table = vec![[[0.0; 2]; 2]; n * n];
    for (w, bx) in terms {
        for (acc, slice) in table.iter_mut().zip(&bx.table) {
            for a in 0..2 {
                for b in 0..2 {
                    acc[a][b] += w * slice[a][b];
                }
            }
        }
    }
    ChainBox::new(n, table)
}

/// `2N sin^2(pi / 4N)`.
pub fn quantum_raw_value(n_settings: usize) -> f64 {
    2.0 * n_settings as f64 * quantum_term(n_settings)
}

/// `sin^2(pi / 4N)`: every chain term of the quantum box.
pub fn quantum_term(n_settings: usize) -> f64 {
    (PI / (4.0 * n_settings as f64)).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chain_order() {
        let sc = ChainScenario::new(3).unwrap();
        let pairs: Vec<_> = sc.pairs().collect();
        assert_eq!(pairs, vec![(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (0, 2)]);
        for (k, (x, y)) in pairs.iter().enumerate() {
            assert_eq!(sc.pair_index(*x, *y), Some(k));
        }
        assert_eq!(sc.pair_index(0, 1), None);
        assert!(sc.is_anticorrelated_pair(0, 2));
        assert!(ChainScenario::new(1).is_err());
    }

    #[test]
    fn quantum_examples() {
        let q2 = build_quantum_box(2).unwrap();
        assert!((bell_value_raw(&q2) - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((bell_value_raw(&q2) - 0.585786).abs() < 1e-6);
        let q4 = build_quantum_box(4).unwrap();
        assert!((bell_value_raw(&q4) - 8.0 * (PI / 16.0).sin().powi(2)).abs() < 1e-12);
        assert!((bell_value_raw(&q4) - 0.304482).abs() < 1e-6);
        for x in 0..4 {
            for y in 0..4 {
                assert!((q4.alice_zero(x, y) - 0.5).abs() < 1e-15);
                assert!((q4.bob_zero(x, y) - 0.5).abs() < 1e-15);
            }
        }
        assert!(box_output_bias(&q4) < 1e-15);
        assert!(check_no_signaling(&q4, 1e-12));
    }

    #[test]
    fn quantum_every_term_equal() {
        for n in [2usize, 3, 7, 16] {
            let q = build_quantum_box(n).unwrap();
            for (x, y) in q.scenario().pairs() {
                assert!((q.term_value(x, y) - quantum_term(n)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chain_pr_examples() {
        for n in 2..=6 {
            let pr = chain_pr_box(n).unwrap();
            assert_eq!(bell_value_raw(&pr), 0.0);
            assert_eq!(box_output_bias(&pr), 0.0);
            assert!(check_no_signaling(&pr, 0.0));
        }
        // N = 2 is the standard PR box: a XOR b = x AND (NOT y) up to relabelling
        let pr = chain_pr_box(2).unwrap();
        assert_eq!(pr.prob_xor(1, 0, 1), 1.0);
        assert_eq!(pr.prob_xor(0, 0, 0), 1.0);
        assert_eq!(pr.prob_xor(0, 1, 0), 1.0);
        assert_eq!(pr.prob_xor(0, 1, 1), 1.0);
    }

    #[test]
    fn deterministic_examples() {
        let d00 = deterministic_box(&[0, 0], &[0, 0]).unwrap();
        assert_eq!(bell_value_raw(&d00), 1.0);
        let d01 = deterministic_box(&[0, 0], &[1, 1]).unwrap();
        // a != b everywhere: fails the three correlated pairs, passes (0, 1)
        assert_eq!(bell_value_raw(&d01), 3.0);
        assert_eq!(box_output_bias(&d01), 0.5);
        assert!(deterministic_box(&[0, 2], &[0, 0]).is_err());
        assert!(deterministic_box(&[0], &[0, 0]).is_err());
    }

    #[test]
    fn mixture_examples() {
        let pr = chain_pr_box(2).unwrap();
        let d00 = deterministic_box(&[0, 0], &[0, 0]).unwrap();
        let half = mix_boxes(&[(0.5, &pr), (0.5, &d00)]).unwrap();
        assert!((bell_value_raw(&half) - 0.5).abs() < 1e-12);
        let mostly_pr = mix_boxes(&[(0.9, &pr), (0.1, &d00)]).unwrap();
        assert!((box_output_bias(&mostly_pr) - 0.05).abs() < 1e-12);
        let q = build_quantum_box(2).unwrap();
        let three = mix_boxes(&[(0.2, &q), (0.3, &pr), (0.5, &d00)]).unwrap();
        let expected = 0.2 * bell_value_raw(&q) + 0.5;
        assert!((bell_value_raw(&three) - expected).abs() < 1e-12);
        assert!(mix_boxes(&[(0.5, &pr)]).is_err());
        assert!(mix_boxes(&[(0.5, &pr), (0.5, &chain_pr_box(3).unwrap())]).is_err());
    }

    #[test]
    fn weighted_examples() {
        let q = build_quantum_box(2).unwrap();
        let u = SettingsDistribution::uniform(2).unwrap();
        assert!((bell_value_weighted(&q, &u).unwrap() - (PI / 8.0).sin().powi(2)).abs() < 1e-12);
        assert!((bell_value_weighted(&q, &u).unwrap() - 0.146447).abs() < 1e-6);

        let last = SettingsDistribution::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let d00 = deterministic_box(&[0, 0], &[0, 0]).unwrap();
        assert_eq!(bell_value_weighted(&d00, &last).unwrap(), 1.0);

        let skew = SettingsDistribution::new(2, vec![0.5, 0.3, 0.1, 0.1]).unwrap();
        assert_eq!(bell_value_weighted(&chain_pr_box(2).unwrap(), &skew).unwrap(), 0.0);
        let q_skew = bell_value_weighted(&q, &skew).unwrap();
        assert!((q_skew - quantum_term(2)).abs() < 1e-15);
        assert!(bell_value_weighted(&q, &SettingsDistribution::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn lhv_examples() {
        for n in 2..=5 {
            assert_eq!(lhv_minimum(n).unwrap(), 1.0);
        }
        assert!(lhv_minimum(9).is_err());
        let u = SettingsDistribution::uniform(2).unwrap();
        assert!((weighted_lhv_minimum(2, &u).unwrap() - 0.25).abs() < 1e-15);
        let skew = SettingsDistribution::new(2, vec![0.5, 0.3, 0.1, 0.1]).unwrap();
        assert!((weighted_lhv_minimum(2, &skew).unwrap() - 0.1).abs() < 1e-15);
        let hole = SettingsDistribution::new(2, vec![0.4, 0.3, 0.3, 0.0]).unwrap();
        assert_eq!(weighted_lhv_minimum(2, &hole).unwrap(), 0.0);
    }

    #[test]
    fn signaling_table_detected() {
        let mut table = vec![[[0.25; 2]; 2]; 4];
        // P(a=0 | x=0) = 0.7 when y = 1, 0.5 when y = 0
        table[1] = [[0.35, 0.35], [0.15, 0.15]];
        let bx = ChainBox::new(2, table).unwrap();
        assert!(!check_no_signaling(&bx, 1e-9));
        assert!(check_no_signaling(&bx, 0.21));
    }

    #[test]
    fn rejects_unnormalised_tables() {
        let table = vec![[[0.25; 2]; 2], [[0.3; 2]; 2], [[0.25; 2]; 2], [[0.25; 2]; 2]];
        assert!(ChainBox::new(2, table).is_err());
        assert!(ChainBox::new(2, vec![[[0.25; 2]; 2]; 3]).is_err());
        assert!(SettingsDistribution::new(2, vec![0.5, 0.5, 0.1, 0.0]).is_err());
    }

    #[test]
    fn only_random_boxes_violate_at_chsh_scale() {
        let mut boxes = Vec::new();
        for a in 0..4u8 {
            for b in 0..4u8 {
                boxes.push(deterministic_box(&[a & 1, a >> 1], &[b & 1, b >> 1]).unwrap());
            }
        }
        for alpha in [false, true] {
            for beta in [false, true] {
                for gamma in [false, true] {
                    boxes.push(
                        parity_box(2, |x, y| ((x == 1) & (y == 1)) ^ (alpha & (x == 1)) ^ (beta & (y == 1)) ^ gamma)
                            .unwrap(),
                    );
                }
            }
        }
        assert_eq!(boxes.len(), 24);
        let mut violators = 0;
        for bx in &boxes {
            assert!(check_no_signaling(bx, 1e-12));
            if bell_value_raw(bx) < 1.0 {
                violators += 1;
                assert_eq!(box_output_bias(bx), 0.0);
            }
        }
        assert!(violators >= 1);
    }

    #[test]
    fn box_json_round_trip() {
        let q = build_quantum_box(3).unwrap();
        let json = serde_json::to_value(&q).unwrap();
        assert_eq!(json["N"], 3);
        assert_eq!(json["table"].as_array().unwrap().len(), 3);
        assert_eq!(json["table"][0][1][0].as_array().unwrap().len(), 2);
        let back: ChainBox = serde_json::from_value(json).unwrap();
        assert_eq!(back, q);
        assert!(serde_json::from_str::<ChainBox>(r#"{"N": 2, "table": [[[[1,0],[0,0]]]]}"#).is_err());
    }

    proptest! {
        #[test]
        fn weighted_lhv_is_cheapest_pair(n in 2usize..=5, raw in prop::collection::vec(0.0f64..1.0, 10)) {
            let raw = &raw[..2 * n];
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = raw.iter().map(|p| (p + 1e-9 / (2 * n) as f64) / total).collect();
            let sd = SettingsDistribution::new(n, probs).unwrap();
            let got = weighted_lhv_minimum(n, &sd).unwrap();
            prop_assert!((got - sd.min_prob()).abs() < 1e-12);
        }

        #[test]
        fn raw_value_is_linear(w in 0.0f64..1.0, v in 0.0f64..1.0, alice in 0u8..8, bob in 0u8..8) {
            let n = 3;
            let det = deterministic_box(&[alice & 1, (alice >> 1) & 1, alice >> 2], &[bob & 1, (bob >> 1) & 1, bob >> 2]).unwrap();
            let q = build_quantum_box(n).unwrap();
            let pr = chain_pr_box(n).unwrap();
            let (w1, w2) = (w * v, w * (1.0 - v));
            let w3 = 1.0 - w1 - w2;
            let mix = mix_boxes(&[(w1, &det), (w2, &q), (w3, &pr)]).unwrap();
            let expected = w1 * bell_value_raw(&det) + w2 * bell_value_raw(&q) + w3 * bell_value_raw(&pr);
            prop_assert!((bell_value_raw(&mix) - expected).abs() < 1e-12);
            prop_assert!(check_no_signaling(&mix, 1e-12));
        }
    }
}
