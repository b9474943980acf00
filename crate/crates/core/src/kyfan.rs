//! Ky Fan norms (top-k sums) of Bernoulli distributions over `2r` bits.
//!
//! The Bernoulli law with `P(0) = p+` has `C(2r, i)` entries equal to
//! `p+^(2r-i) p-^i`, non-increasing in `i`, so the top-k sum walks whole
//! binomial layers from `i = 0` and finishes with a partial layer. Three
//! routes are offered: brute-force sorting (oracle), the layer walk in any
//! [`Scalar`] backend (small `r`), and a base-2 log-domain walk that stays
//! finite for large `r`. The large-`r` bounds built on the entropy root `c`
//! are in [`lemma2_bounds`].

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::logreal::LogReal;
use crate::scalar::Scalar;
use crate::sv::{Epsilon, ProbDist};

/// Largest `n` accepted by [`ky_fan_bruteforce`].
pub const MAX_BRUTEFORCE_BITS: usize = 24;

/// Largest `r` for the direct (non-log) layer walk; `C(60, 30)` still fits in `u64`.
pub const MAX_DIRECT_R: u32 = 30;

/// Upper limit on `eps` for the norm bound constant to be finite and `alpha < 1`.
pub const LEMMA2_EPS_LIMIT: f64 = 0.39;

/// Bounds are only claimed from this `r` upwards.
pub const LEMMA2_MIN_R: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KyFanMode {
    Bruteforce,
    /// True top-k sum with a partial final layer.
    Closed,
    /// Whole layers `0..=m` (may overshoot k).
    Layer,
    LowerBound,
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KyFanResult {
    pub r: u32,
    pub eps: f64,
    pub mode: KyFanMode,
    /// Number of summed entries, as a decimal string (it exceeds 2^64 for large r).
    #[serde(serialize_with = "serialize_decimal")]
    pub k: BigUint,
    pub log2_value: f64,
    /// Linear value when it is a normal `f64`.
    pub value: Option<f64>,
}

fn serialize_decimal<S: serde::Serializer>(k: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(k)
}

impl KyFanResult {
    fn from_log(r: u32, eps: Epsilon, mode: KyFanMode, log: LogReal) -> Self {
        let v = log.value();
        Self {
            r,
            eps: eps.value(),
            mode,
            k: settings_top_k(r),
            log2_value: log.log2_value,
            value: v.is_normal().then_some(v),
        }
    }
}

/// `2^(r+1) - 1`: number of chain pairs other than the rarest one.
pub fn settings_top_k(r: u32) -> BigUint {
    (BigUint::one() << (r as usize + 1)) - BigUint::one()
}

/// Sum of the `k` largest entries.
pub fn ky_fan_bruteforce(dist: &ProbDist, k: usize) -> Result<f64> {
    if dist.n() > MAX_BRUTEFORCE_BITS {
        return Err(out_of_range("n", dist.n(), "[1, 24] for brute force"));
    }
    let len = dist.probs().len();
    if k == 0 || k > len {
        return Err(out_of_range("k", k, &format!("[1, {len}]")));
    }
    let mut sorted = dist.probs().to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCutoff {
    /// Smallest `m` with `sum_{i<=m} C(2r, i) >= 2^(r+1) - 1`.
    pub m: u32,
    pub c_finite: f64,
    /// `sum_{i<m} C(2r, i)`: entries taken from full layers.
    #[serde(skip)]
    pub full_layer_count: BigUint,
}

pub fn layer_cutoff(r: u32) -> Result<LayerCutoff> {
    check_r(r)?;
    let k = settings_top_k(r);
    let two_r = 2 * r;
    let mut binom = BigUint::one();
    let mut cumulative = BigUint::zero();
    for i in 0..=two_r {
        if &cumulative + &binom >= k {
            return Ok(LayerCutoff { m: i, c_finite: i as f64 / r as f64, full_layer_count: cumulative });
        }
        cumulative += &binom;
        binom = binom * BigUint::from(two_r - i) / BigUint::from(i + 1);
    }
    unreachable!("2^(2r) >= 2^(r+1) - 1 for r >= 1")
}

fn check_r(r: u32) -> Result<()> {
    if r == 0 {
        return Err(out_of_range("r", r, "r >= 1"));
    }
    Ok(())
}

fn binomial_u64(n: u32, k: u32) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Top-`(2^(r+1)-1)` sum of Bernoulli(`2r`, `p_plus`) in any backend; `r <= 30`.
pub fn ky_fan_top_k_in<T: Scalar>(r: u32, p_plus: &T, p_minus: &T) -> Result<T> {
    layer_walk_in(r, p_plus, p_minus, false)
}

/// Whole-layer sum `sum_{i<=m} C(2r, i) p+^(2r-i) p-^i`; `r <= 30`.
pub fn ky_fan_layer_in<T: Scalar>(r: u32, p_plus: &T, p_minus: &T) -> Result<T> {
    layer_walk_in(r, p_plus, p_minus, true)
}

fn layer_walk_in<T: Scalar>(r: u32, p_plus: &T, p_minus: &T, whole_layers: bool) -> Result<T> {
    check_r(r)?;
    if r > MAX_DIRECT_R {
        return Err(out_of_range("r", r, "[1, 30] for the direct layer walk"));
    }
    let cut = layer_cutoff(r)?;
    let two_r = 2 * r;
    let entry = |i: u32| p_plus.powi(two_r - i) * p_minus.powi(i);
    let mut acc = T::zero();
    for i in 0..cut.m {
        acc = acc + T::from_count(binomial_u64(two_r, i)) * entry(i);
    }
    let last_count = if whole_layers {
        binomial_u64(two_r, cut.m)
    } else {
        (settings_top_k(r) - &cut.full_layer_count).to_u64().expect("fits for r <= 30")
    };
    Ok(acc + T::from_count(last_count) * entry(cut.m))
}

fn log2_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("finite below 2^1000").log2();
    }
    let shift = bits - 64;
    (x >> shift as usize).to_f64().expect("64-bit mantissa").log2() + shift as f64
}

fn log2_layer_walk(r: u32, eps: Epsilon, whole_layers: bool) -> Result<LogReal> {
    let cut = layer_cutoff(r)?;
    let two_r = 2 * r;
    let (lp, lm) = (eps.p_plus().log2(), eps.p_minus().log2());
    // i * log2(p-) with i = 0 must not turn -inf into NaN
    let entry = |i: u32| {
        let minus = if i == 0 { 0.0 } else { i as f64 * lm };
        (two_r - i) as f64 * lp + minus
    };
    let mut binom = BigUint::one();
    let mut terms = Vec::with_capacity(cut.m as usize + 1);
    for i in 0..cut.m {
        terms.push(LogReal::from_log2(log2_biguint(&binom) + entry(i)));
        binom = binom * BigUint::from(two_r - i) / BigUint::from(i + 1);
    }
    let last_count = if whole_layers { binom } else { settings_top_k(r) - &cut.full_layer_count };
    terms.push(LogReal::from_log2(log2_biguint(&last_count) + entry(cut.m)));
    Ok(LogReal::sum(terms))
}

/// Exact top-k Ky Fan norm in the base-2 log domain, any `r >= 1`.
pub fn ky_fan_log2(r: u32, eps: Epsilon) -> Result<LogReal> {
    log2_layer_walk(r, eps, false)
}

/// Whole-layer variant of [`ky_fan_log2`].
pub fn ky_fan_layer_log2(r: u32, eps: Epsilon) -> Result<LogReal> {
    log2_layer_walk(r, eps, true)
}

/// Ky Fan norm of order `2^(r+1) - 1` of the `2r`-bit Bernoulli law.
///
/// Uses the direct walk for `r <= 30` (so the value is accurate to rounding)
/// and the log-domain walk beyond.
pub fn ky_fan_bernoulli_exact(r: u32, eps: Epsilon) -> Result<KyFanResult> {
    let log = if r <= MAX_DIRECT_R {
        LogReal::from_value(ky_fan_top_k_in(r, &eps.p_plus(), &eps.p_minus())?)
    } else {
        ky_fan_log2(r, eps)?
    };
    Ok(KyFanResult::from_log(r, eps, KyFanMode::Closed, log))
}

pub fn ky_fan_bernoulli_layer(r: u32, eps: Epsilon) -> Result<KyFanResult> {
    let log = if r <= MAX_DIRECT_R {
        LogReal::from_value(ky_fan_layer_in(r, &eps.p_plus(), &eps.p_minus())?)
    } else {
        ky_fan_layer_log2(r, eps)?
    };
    Ok(KyFanResult::from_log(r, eps, KyFanMode::Layer, log))
}

/// Brute-force route over the explicit `2r`-bit distribution (`r <= 12`).
pub fn ky_fan_bernoulli_bruteforce(r: u32, eps: Epsilon) -> Result<KyFanResult> {
    check_r(r)?;
    if 2 * r as usize > MAX_BRUTEFORCE_BITS {
        return Err(out_of_range("r", r, "[1, 12] for brute force"));
    }
    let dist = crate::sv::bernoulli_distribution(2 * r as usize, eps)?;
    let k = (1usize << (r + 1)) - 1;
    let value = ky_fan_bruteforce(&dist, k)?;
    Ok(KyFanResult::from_log(r, eps, KyFanMode::Bruteforce, LogReal::from_value(value)))
}

/// `log2 C(n, k)` through the log-gamma function.
pub fn log_binomial(n: u64, k: u64) -> Result<LogReal> {
    if k > n {
        return Err(out_of_range("k", k, &format!("[0, {n}]")));
    }
    let ln = statrs::function::factorial::ln_binomial(n, k);
    Ok(LogReal::from_log2(ln / std::f64::consts::LN_2))
}

pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::OutOfRange {
            what: "bracket",
            value: format!("[{lo}, {hi}]"),
            range: "an interval where f changes sign".into(),
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of `H(c/2) = 1/2` on `(0, 1)`.
pub fn solve_c_asymptotic(tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(out_of_range("tol", tol, "tol > 0"));
    }
    bisect(|c| binary_entropy(c / 2.0) - 0.5, 1e-9, 1.0 - 1e-9, tol)
}

/// Default tolerance for the entropy root.
pub const C_TOLERANCE: f64 = 1e-14;

pub fn entropy_root() -> f64 {
    solve_c_asymptotic(C_TOLERANCE).expect("H(c/2) - 1/2 changes sign on (0, 1)")
}

/// `(2 - c)(1 - 2 eps) / (2 (1 - c - 2 eps))`.
pub fn bound_factor(c: f64, eps: Epsilon) -> f64 {
    let e = eps.value();
    (2.0 - c) * (1.0 - 2.0 * e) / (2.0 * (1.0 - c - 2.0 * e))
}

/// Ratio bound between consecutive layer masses below `cr`:
/// `c (1 + 2 eps) / ((2 - c)(1 - 2 eps))`.
pub fn layer_ratio_bound(c: f64, eps: Epsilon) -> f64 {
    let e = eps.value();
    c * (1.0 + 2.0 * e) / ((2.0 - c) * (1.0 - 2.0 * e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma2Bounds {
    pub r: u32,
    pub eps: f64,
    pub c: f64,
    /// `floor(c * r)`.
    pub cr: u64,
    pub bound_factor: f64,
    pub lower: LogReal,
    pub upper: LogReal,
    /// Whether `r` is in the range where the bounds are claimed.
    pub asserted: bool,
}

/// Large-`r` bounds on the Ky Fan norm using the asymptotic entropy root.
pub fn lemma2_bounds(r: u32, eps: Epsilon) -> Result<Lemma2Bounds> {
    lemma2_bounds_with_c(r, eps, entropy_root())
}

/// Same bounds with a caller-chosen `c` (e.g. the finite-`r` cutoff `m / r`).
pub fn lemma2_bounds_with_c(r: u32, eps: Epsilon, c: f64) -> Result<Lemma2Bounds> {
    check_r(r)?;
    if eps.value() >= LEMMA2_EPS_LIMIT {
        return Err(out_of_range("eps", eps.value(), "[0, 0.39) for the norm bound"));
    }
    if !(c > 0.0 && c < 1.0 - 2.0 * eps.value()) {
        return Err(out_of_range("c", c, "(0, 1 - 2 eps)"));
    }
    let two_r = 2 * r as u64;
    // c * r rounded down, snapping values within 1e-9 of an integer (c = m / r)
    let cr_real = c * r as f64;
    let cr = if (cr_real - cr_real.round()).abs() < 1e-9 { cr_real.round() } else { cr_real.floor() } as u64;
    let (lp, lm) = (eps.p_plus().log2(), eps.p_minus().log2());
    let lower = log_binomial(two_r, cr)? * LogReal::from_log2(cr as f64 * lm + (two_r - cr) as f64 * lp);
    let factor = bound_factor(c, eps);
    Ok(Lemma2Bounds {
        r,
        eps: eps.value(),
        c,
        cr,
        bound_factor: factor,
        lower,
        upper: lower * LogReal::from_value(factor),
        asserted: r >= LEMMA2_MIN_R,
    })
}
