//! The amplification bound pipeline: rarest chain-pair probability, the
//! admissible fraction of non-random boxes, the output bias, and the two
//! epsilon thresholds.
//!
//! Everything that scales like `p^(2r)` or `2^r` is evaluated in base-2 logs
//! so that sweeps to `r` in the hundreds stay finite.

use std::f64::consts::PI;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::chain::{ChainScenario, SettingsDistribution};
use crate::error::{out_of_range, Error, Result};
use crate::kyfan::{self, bisect, entropy_root, ky_fan_bernoulli_exact, ky_fan_top_k_in};
use crate::logreal::LogReal;
use crate::scalar::Scalar;
use crate::sv::{Epsilon, ProbDist};

/// Exponents used in the finite-`r` lower bound on `eps_new`.
pub const LOWER_BOUND_MINUS_EXPONENT: f64 = 0.22;
pub const LOWER_BOUND_PLUS_EXPONENT: f64 = 1.78;

fn check_r(r: u32) -> Result<()> {
    if r == 0 || r > 1000 {
        return Err(out_of_range("r", r, "[1, 1000]"));
    }
    Ok(())
}

/// `log2 sin^2(pi / 2^(r+2))`, the per-term quantum value for `N = 2^r`.
pub fn beta_q_log2(r: u32) -> f64 {
    let x = PI * (-(r as f64 + 2.0)).exp2();
    // sin x = x * (sin x / x); the ratio is a well-conditioned O(1) factor
    2.0 * (x.log2() + (x.sin() / x).log2())
}

pub fn beta_q(r: u32) -> f64 {
    beta_q_log2(r).exp2()
}

/// `p_min = p-^(2r) / (p-^(2r) + ||B||_(2^(r+1)-1))`.
///
/// At `eps = 0` this is exactly `1 / 2N`.
pub fn p_min(r: u32, eps: Epsilon) -> Result<LogReal> {
    check_r(r)?;
    if eps.value() == 0.0 {
        return Ok(LogReal::from_log2(-(r as f64 + 1.0)));
    }
    let rarest = LogReal::from_value(eps.p_minus()).powi(2.0 * r as f64);
    let kyfan = LogReal::from_log2(ky_fan_bernoulli_exact(r, eps)?.log2_value);
    Ok(rarest / (rarest + kyfan))
}

/// [`p_min`] in exact rational arithmetic (`r <= 30`).
pub fn p_min_exact(r: u32, eps: &BigRational) -> Result<BigRational> {
    let half = <BigRational as Scalar>::half();
    if *eps < BigRational::zero() || *eps >= half {
        return Err(Error::InvalidEpsilon(eps.approx()));
    }
    let (p_plus, p_minus) = (half.clone() + eps.clone(), half - eps.clone());
    let kyfan = ky_fan_top_k_in(r, &p_plus, &p_minus)?;
    let rarest = Scalar::powi(&p_minus, 2 * r);
    Ok(rarest.clone() / (rarest + kyfan))
}

/// `min(1, eta_q / eta_sv)`.
pub fn general_delta(eta_q: f64, eta_sv: f64) -> Result<f64> {
    if !(eta_sv > 0.0 && eta_sv <= 1.0) {
        return Err(out_of_range("eta_sv", eta_sv, "(0, 1]"));
    }
    if eta_q.is_nan() || eta_q < 0.0 {
        return Err(out_of_range("eta_q", eta_q, "eta_q >= 0"));
    }
    Ok((eta_q / eta_sv).min(1.0))
}

/// Unclamped `log2(beta_Q / p_min)`.
pub fn delta_bound_log2(r: u32, eps: Epsilon) -> Result<f64> {
    Ok(beta_q_log2(r) - p_min(r, eps)?.log2_value)
}

/// Largest fraction of non-random boxes compatible with the quantum value, clamped to 1.
pub fn delta_bound(r: u32, eps: Epsilon) -> Result<f64> {
    Ok(delta_bound_log2(r, eps)?.exp2().min(1.0))
}

/// Unclamped `log2(beta_Q * 2^(r+1) * (p+/p-)^(2r))`.
pub fn delta_bound_coarse_log2(r: u32, eps: Epsilon) -> Result<f64> {
    check_r(r)?;
    let ratio = if eps.value() == 0.0 { 0.0 } else { (eps.p_plus() / eps.p_minus()).log2() };
    Ok(beta_q_log2(r) + (r as f64 + 1.0) + 2.0 * r as f64 * ratio)
}

/// [`delta_bound`] with the Ky Fan denominator replaced by `2N p+^(2r)`.
pub fn delta_bound_coarse(r: u32, eps: Epsilon) -> Result<f64> {
    Ok(delta_bound_coarse_log2(r, eps)?.exp2().min(1.0))
}

/// Output bias `delta / 2`.
pub fn eps_new(r: u32, eps: Epsilon) -> Result<f64> {
    Ok(delta_bound(r, eps)? / 2.0)
}

/// `log2` of `beta_Q (p-^(2r) + (2^(r+1)-1) p-^(0.22 r) p+^(1.78 r)) / (2 p-^(2r))`.
pub fn eps_new_lower_bound_log2(r: u32, eps: Epsilon) -> Result<f64> {
    check_r(r)?;
    let (lp, lm) = (eps.p_plus().log2(), eps.p_minus().log2());
    let r_f = r as f64;
    let count = LogReal::from_log2(r_f + 1.0 + (-(-(r_f + 1.0)).exp2()).ln_1p() / std::f64::consts::LN_2);
    let layer = LogReal::from_log2(LOWER_BOUND_MINUS_EXPONENT * r_f * lm + LOWER_BOUND_PLUS_EXPONENT * r_f * lp);
    let rarest = LogReal::from_log2(2.0 * r_f * lm);
    let numerator = rarest + count * layer;
    Ok(beta_q_log2(r) + numerator.log2_value - 1.0 - rarest.log2_value)
}

/// Finite-`r` lower bound on `eps_new`; unclamped, may be `inf`.
pub fn eps_new_lower_bound(r: u32, eps: Epsilon) -> Result<f64> {
    Ok(eps_new_lower_bound_log2(r, eps)?.exp2())
}

/// `(sqrt 2 - 1)^2 / 2`.
pub fn threshold_simple() -> f64 {
    (2f64.sqrt() - 1.0).powi(2) / 2.0
}

/// Root of `(1/2 + e)^2 = 2 (1/2 - e)^2` on `(0, 1/2)`, found numerically.
pub fn threshold_simple_root() -> f64 {
    bisect(|e| (0.5 + e).powi(2) - 2.0 * (0.5 - e).powi(2), 0.0, 0.5, 1e-15)
        .expect("sign change on (0, 1/2)")
}

/// `(2^(1/(2-c)) - 1) / (2 (2^(1/(2-c)) + 1))` for a given cutoff constant `c`.
pub fn threshold_for_c(c: f64) -> f64 {
    let t = (1.0 / (2.0 - c)).exp2();
    (t - 1.0) / (2.0 * (t + 1.0))
}

/// Largest `eps` for which `delta` vanishes as `r` grows.
pub fn threshold_asymptotic() -> f64 {
    threshold_for_c(entropy_root())
}

/// Post-selected law of `(x, y)` when the first `r` bits give `x` and the last `r` give `y`.
pub fn settings_distribution_from_sv(dist: &ProbDist, r: u32) -> Result<SettingsDistribution> {
    if r == 0 || dist.n() != 2 * r as usize {
        return Err(Error::DimensionMismatch(format!(
            "expected a {}-bit distribution, got {} bits",
            2 * r,
            dist.n()
        )));
    }
    let n_settings = 1usize << r;
    let sc = ChainScenario::new(n_settings)?;
    let mut mass: Vec<f64> = sc.pairs().map(|(x, y)| dist.probs()[x * n_settings + y]).collect();
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroChainMass);
    }
    mass.iter_mut().for_each(|m| *m /= total);
    // renormalise once more so the sum is 1 to rounding
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    SettingsDistribution::new(n_settings, mass)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub r: u32,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n_settings: f64,
    pub log2_kyfan: f64,
    pub log2_p_min: f64,
    pub beta_q: f64,
    pub log2_beta_q: f64,
    pub delta_bound: f64,
    pub delta_bound_coarse: f64,
    pub eps_new: f64,
    /// Lower bound on `eps_new`, capped at 1/2.
    pub eps_new_lower: f64,
    pub log2_eps_new_lower: f64,
    pub threshold_simple: f64,
    pub threshold_asymptotic: f64,
}

impl ProtocolReport {
    pub const CSV_HEADER: &'static str = "r,log2_kyfan,log2_pmin,delta,delta_coarse,eps_new,eps_new_lower";

    pub fn csv_row(&self) -> String {
        [
            self.r.to_string(),
            fmt_sig(self.log2_kyfan),
            fmt_sig(self.log2_p_min),
            fmt_sig(self.delta_bound),
            fmt_sig(self.delta_bound_coarse),
            fmt_sig(self.eps_new),
            fmt_sig(self.eps_new_lower),
        ]
        .join(",")
    }
}

/// Rounds to 15 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.14e}").parse().unwrap_or(x)
}

/// Shortest decimal text of `x` rounded to 15 significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{:?}", round_sig(x))
}

pub fn protocol_report(r: u32, eps: Epsilon) -> Result<ProtocolReport> {
    check_r(r)?;
    let kyfan = ky_fan_bernoulli_exact(r, eps)?;
    let lower_log2 = eps_new_lower_bound_log2(r, eps)?;
    let delta = delta_bound(r, eps)?;
    Ok(ProtocolReport {
        r,
        eps: eps.value(),
        n_settings: (r as f64).exp2(),
        log2_kyfan: kyfan.log2_value,
        log2_p_min: p_min(r, eps)?.log2_value,
        beta_q: beta_q(r),
        log2_beta_q: beta_q_log2(r),
        delta_bound: delta,
        delta_bound_coarse: delta_bound_coarse(r, eps)?,
        eps_new: delta / 2.0,
        eps_new_lower: lower_log2.exp2().min(0.5),
        log2_eps_new_lower: lower_log2,
        threshold_simple: threshold_simple(),
        threshold_asymptotic: threshold_asymptotic(),
    })
}

/// Reports for `r_min..=r_max`, computed in parallel; order follows `r`.
pub fn protocol_curve(eps: Epsilon, r_min: u32, r_max: u32) -> Result<Vec<ProtocolReport>> {
    use rayon::prelude::*;
    if r_min == 0 || r_min > r_max {
        return Err(out_of_range("r range", format!("{r_min}..={r_max}"), "1 <= r_min <= r_max"));
    }
    (r_min..=r_max).into_par_iter().map(|r| protocol_report(r, eps)).collect()
}

/// Convenience: `kyfan::layer_cutoff(r).c_finite`.
pub fn finite_cutoff_constant(r: u32) -> Result<f64> {
    Ok(kyfan::layer_cutoff(r)?.c_finite)
}

/// `1 / 2N` as an exact rational.
pub fn ideal_p_min(r: u32) -> BigRational {
    BigRational::one() / BigRational::from_integer(num_bigint::BigInt::one() << (r as usize + 1))
}
