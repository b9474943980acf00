//! Numeric backends shared by the exact (rational) and floating-point code paths.
//!
//! Small-n constructions (extremal distributions, decompositions, top-k sums)
//! are written once against [`Scalar`] and instantiated with `f64` or
//! [`BigRational`].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive, Zero};

pub trait Scalar: Clone + PartialOrd + Num + FromPrimitive + ToPrimitive + std::fmt::Debug {
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn powi(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    fn powi(&self, exp: u32) -> Self {
        f64::powi(*self, exp as i32)
    }
}

impl Scalar for BigRational {
    fn powi(&self, exp: u32) -> Self {
        num_traits::pow(self.clone(), exp as usize)
    }
}

/// Parses `"0.1"`, `"1/10"` or `"3"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let num: BigInt = digits.parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac_part.len());
    let value = BigRational::new(num, den);
    Some(if negative { -value } else { value })
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_rational("0.1"), Some(rational(1, 10)));
        assert_eq!(parse_rational("1/10"), Some(rational(1, 10)));
        assert_eq!(parse_rational("-0.25"), Some(rational(-1, 4)));
        assert_eq!(parse_rational("2"), Some(rational(2, 1)));
        assert_eq!(parse_rational("x"), None);
        assert_eq!(parse_rational("1/0"), None);
    }

    #[test]
    fn rational_powi() {
        let p = rational(3, 5);
        assert_eq!(Scalar::powi(&p, 3), rational(27, 125));
        assert_eq!(<BigRational as Scalar>::half(), rational(1, 2));
        assert_eq!(Scalar::powi(&0.5f64, 2), 0.25);
    }
}
