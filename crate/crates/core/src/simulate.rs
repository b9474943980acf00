//! Monte Carlo runs of the chained-Bell protocol against a fixed adversary.
//!
//! Each trial draws `2r` setting bits, keeps the trial only if `(x, y)` is a
//! chain pair, picks a box from the adversary's mixture and samples outcomes.
//!
//! Randomness: trial `t` uses the ChaCha8 stream `t` under the key derived
//! from the master seed, so results do not depend on how trials are split
//! across workers. Aggregates are integer counts, hence bit-identical.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{build_quantum_box, chain_pr_box, deterministic_box, ChainBox, ChainScenario, NORMALIZATION_TOLERANCE};
use crate::error::{out_of_range, Error, Result};
use crate::sv::{sample_bits_with, Epsilon, ExtremalLabeling, ExtremalSampler, ProbDist};

const CHUNK: u64 = 1 << 14;

/// How the adversary drives the SV source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvStrategy {
    /// Perfectly random settings bits.
    HonestUniform,
    /// One extremal labeling for every trial.
    Fixed { signs: ExtremalLabeling },
    /// A fresh labeling per trial, drawn from the decomposition of `dist`.
    PerTrial { dist: ProbDist },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoxSpec {
    Quantum,
    ChainPr,
    Deterministic { alice: Vec<u8>, bob: Vec<u8> },
    Table { table: ChainBox },
}

impl BoxSpec {
    pub fn build(&self, n_settings: usize) -> Result<ChainBox> {
        let bx = match self {
            BoxSpec::Quantum => build_quantum_box(n_settings)?,
            BoxSpec::ChainPr => chain_pr_box(n_settings)?,
            BoxSpec::Deterministic { alice, bob } => deterministic_box(alice, bob)?,
            BoxSpec::Table { table } => table.clone(),
        };
        if bx.n_settings() != n_settings {
            return Err(Error::DimensionMismatch(format!(
                "box has N = {}, protocol uses N = {n_settings}",
                bx.n_settings()
            )));
        }
        Ok(bx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedBox {
    pub weight: f64,
    #[serde(flatten)]
    pub spec: BoxSpec,
}

/// On-disk strategy description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub sv: SvStrategy,
    pub boxes: Vec<WeightedBox>,
}

#[derive(Debug, Clone)]
enum SettingsSource {
    Uniform,
    Fixed(ExtremalLabeling),
    PerTrial(ExtremalSampler),
}

/// Strategy resolved against a concrete `(r, eps)`.
#[derive(Debug, Clone)]
pub struct AdversaryStrategy {
    r: u32,
    eps: Epsilon,
    source: SettingsSource,
    boxes: Vec<(f64, ChainBox)>,
}

impl AdversaryStrategy {
    pub fn new(r: u32, eps: Epsilon, sv: SvStrategy, boxes: Vec<(f64, ChainBox)>) -> Result<Self> {
        if r == 0 || r > 10 {
            return Err(out_of_range("r", r, "[1, 10] for simulation"));
        }
        let bits = 2 * r as usize;
        let source = match sv {
            SvStrategy::HonestUniform => SettingsSource::Uniform,
            SvStrategy::Fixed { signs } => {
                if signs.n() != bits {
                    return Err(Error::DimensionMismatch(format!("labeling has {} bits, need {bits}", signs.n())));
                }
                SettingsSource::Fixed(signs)
            }
            SvStrategy::PerTrial { dist } => {
                if dist.n() != bits {
                    return Err(Error::DimensionMismatch(format!("distribution has {} bits, need {bits}", dist.n())));
                }
                SettingsSource::PerTrial(ExtremalSampler::new(&dist, eps)?)
            }
        };
        if boxes.is_empty() {
            return Err(Error::InvalidDistribution("no boxes in the adversary mixture".into()));
        }
        if boxes.iter().any(|(w, _)| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("negative box weight".into()));
        }
        let total: f64 = boxes.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("box weights sum to {total}")));
        }
        let n_settings = 1usize << r;
        if let Some((_, b)) = boxes.iter().find(|(_, b)| b.n_settings() != n_settings) {
            return Err(Error::DimensionMismatch(format!("box has N = {}, need {n_settings}", b.n_settings())));
        }
        Ok(Self { r, eps, source, boxes })
    }

    pub fn from_spec(r: u32, eps: Epsilon, spec: &StrategySpec) -> Result<Self> {
        let n_settings = 1usize << r.min(16);
        let boxes = spec
            .boxes
            .iter()
            .map(|wb| Ok((wb.weight, wb.spec.build(n_settings)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(r, eps, spec.sv.clone(), boxes)
    }

    /// Uniform settings measured on the quantum box.
    pub fn honest(r: u32, eps: Epsilon) -> Result<Self> {
        let bx = build_quantum_box(1usize << r.min(16))?;
        Self::new(r, eps, SvStrategy::HonestUniform, vec![(1.0, bx)])
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    fn draw_settings(&self, rng: &mut ChaCha8Rng) -> usize {
        let bits = 2 * self.r as usize;
        match &self.source {
            SettingsSource::Uniform => (rng.next_u64() as usize) & ((1 << bits) - 1),
            SettingsSource::Fixed(lab) => sample_bits_with(lab, self.eps, rng).to_index(),
            SettingsSource::PerTrial(sampler) => sampler.sample_path(rng),
        }
    }

    fn draw_box(&self, rng: &mut ChaCha8Rng) -> &ChainBox {
        if self.boxes.len() == 1 {
            return &self.boxes[0].1;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, b) in &self.boxes {
            acc += w;
            if u < acc {
                return b;
            }
        }
        &self.boxes.last().expect("non-empty").1
    }
}

fn draw_outcomes(bx: &ChainBox, x: usize, y: usize, rng: &mut ChaCha8Rng) -> (u8, u8) {
    let s = bx.slice(x, y);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, row) in s.iter().enumerate() {
        for (b, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return (a as u8, b as u8);
            }
        }
    }
    // rounding left u above the cumulative sum; take the last positive cell
    let idx = (0..4).rev().find(|&i| s[i / 2][i % 2] > 0.0).unwrap_or(3);
    ((idx / 2) as u8, (idx % 2) as u8)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    kept: u64,
    fails: u64,
    alice_zero: u64,
    pairs: Vec<u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.kept += other.kept;
        self.fails += other.fails;
        self.alice_zero += other.alice_zero;
        if self.pairs.is_empty() {
            self.pairs = other.pairs;
        } else {
            for (a, b) in self.pairs.iter_mut().zip(other.pairs) {
                *a += b;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub r: u32,
    pub eps: f64,
    pub trials: u64,
    pub kept: u64,
    pub post_selection_rate: f64,
    /// Post-selected mean of the per-pair Bell-term indicator.
    pub weighted_bell_value: f64,
    pub weighted_bell_se: f64,
    /// `P(a = 0) - 1/2` over kept trials.
    pub alice_bias: f64,
    pub alice_bias_se: f64,
    pub settings_min_prob: f64,
    pub estimator: String,
}

/// Standard error of a Bernoulli mean from its sample standard deviation.
fn bernoulli_se(mean: f64, count: u64) -> f64 {
    if count < 2 {
        return 0.0;
    }
    let n = count as f64;
    (mean * (1.0 - mean) * n / (n - 1.0)).sqrt() / n.sqrt()
}

fn run_chunk(strategy: &AdversaryStrategy, base: &ChaCha8Rng, start: u64, end: u64) -> Tally {
    let r = strategy.r as usize;
    let n_settings = 1usize << r;
    let sc = ChainScenario::new(n_settings).expect("N >= 2");
    let mut tally = Tally { pairs: vec![0; 2 * n_settings], ..Tally::default() };
    for trial in start..end {
        let mut rng = base.clone();
        rng.set_stream(trial);
        let settings = strategy.draw_settings(&mut rng);
        let (x, y) = (settings >> r, settings & (n_settings - 1));
        let Some(k) = sc.pair_index(x, y) else {
            continue;
        };
        let bx = strategy.draw_box(&mut rng);
        let (a, b) = draw_outcomes(bx, x, y, &mut rng);
        tally.kept += 1;
        tally.pairs[k] += 1;
        tally.fails += sc.term_fails(x, y, a, b) as u64;
        tally.alice_zero += (a == 0) as u64;
    }
    tally
}

/// Runs `trials` protocol rounds on the global rayon pool.
pub fn run_protocol(strategy: &AdversaryStrategy, trials: u64, master_seed: u64) -> Result<SimReport> {
    run_protocol_on(strategy, trials, master_seed, None)
}

/// Same as [`run_protocol`] with a dedicated pool of `workers` threads (0 = rayon default).
pub fn run_protocol_with_workers(
    strategy: &AdversaryStrategy,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<SimReport> {
    run_protocol_on(strategy, trials, master_seed, Some(workers))
}

fn run_protocol_on(strategy: &AdversaryStrategy, trials: u64, master_seed: u64, workers: Option<usize>) -> Result<SimReport> {
    if trials == 0 {
        return Err(out_of_range("trials", trials, "trials >= 1"));
    }
    let base = ChaCha8Rng::seed_from_u64(master_seed);
    let chunks = trials.div_ceil(CHUNK);
    let work = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| run_chunk(strategy, &base, c * CHUNK, ((c + 1) * CHUNK).min(trials)))
            .reduce(Tally::default, Tally::merge)
    };
    let tally = match workers {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Parse(format!("thread pool: {e}")))?
            .install(work),
    };
    if tally.kept == 0 {
        return Err(Error::NoKeptTrials);
    }
    let kept = tally.kept as f64;
    let bell = tally.fails as f64 / kept;
    let p_zero = tally.alice_zero as f64 / kept;
    let min_pair = tally.pairs.iter().copied().min().unwrap_or(0) as f64 / kept;
    Ok(SimReport {
        r: strategy.r,
        eps: strategy.eps.value(),
        trials,
        kept: tally.kept,
        post_selection_rate: kept / trials as f64,
        weighted_bell_value: bell,
        weighted_bell_se: bernoulli_se(bell, tally.kept),
        alice_bias: p_zero - 0.5,
        alice_bias_se: bernoulli_se(p_zero, tally.kept),
        settings_min_prob: min_pair,
        estimator: "post_selected_mean".into(),
    })
}

/// Seed for grid cell `index`, derived from the master seed by stream counter.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Runs every strategy in `grid` with its own derived seed.
pub fn sweep_strategies(grid: &[AdversaryStrategy], trials: u64, master_seed: u64) -> Result<Vec<SimReport>> {
    grid.iter()
        .enumerate()
        .map(|(i, s)| run_protocol(s, trials, derive_seed(master_seed, i as u64)))
        .collect()
}
