use std::ops::{Add, Div, Mul};

use serde::{Deserialize, Serialize};

/// A positive quantity stored as its base-2 logarithm.
///
/// `-inf` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogReal {
    pub log2_value: f64,
}

impl LogReal {
    pub const ZERO: LogReal = LogReal { log2_value: f64::NEG_INFINITY };
    pub const ONE: LogReal = LogReal { log2_value: 0.0 };

    pub fn from_log2(log2_value: f64) -> Self {
        Self { log2_value }
    }

    pub fn from_value(x: f64) -> Self {
        Self { log2_value: x.log2() }
    }

    pub fn value(self) -> f64 {
        self.log2_value.exp2()
    }

    pub fn powi(self, exp: f64) -> Self {
        if exp == 0.0 {
            return Self::ONE;
        }
        Self { log2_value: self.log2_value * exp }
    }

    pub fn sum(items: impl IntoIterator<Item = LogReal>) -> Self {
        let items: Vec<f64> = items.into_iter().map(|x| x.log2_value).collect();
        let hi = items.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let acc: f64 = items.iter().map(|l| (l - hi).exp2()).sum();
        Self { log2_value: hi + acc.log2() }
    }

    pub fn min(self, other: Self) -> Self {
        if self.log2_value <= other.log2_value {
            self
        } else {
            other
        }
    }
}

/// `log2(2^a + 2^b)` without leaving the log domain.
impl Add for LogReal {
    type Output = LogReal;
    fn add(self, other: LogReal) -> LogReal {
        let (hi, lo) = if self.log2_value >= other.log2_value {
            (self.log2_value, other.log2_value)
        } else {
            (other.log2_value, self.log2_value)
        };
        if hi == f64::NEG_INFINITY {
            return LogReal::ZERO;
        }
        LogReal { log2_value: hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2 }
    }
}

// products and quotients are sums and differences of logs
#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        LogReal { log2_value: self.log2_value + rhs.log2_value }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for LogReal {
    type Output = LogReal;
    fn div(self, rhs: LogReal) -> LogReal {
        LogReal { log2_value: self.log2_value - rhs.log2_value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = LogReal::from_value(3.0);
        let b = LogReal::from_value(5.0);
        assert!(((a * b).value() - 15.0).abs() < 1e-12);
        assert!(((b / a).value() - 5.0 / 3.0).abs() < 1e-12);
        assert!(((a + b).value() - 8.0).abs() < 1e-12);
        assert!((LogReal::sum([a, b, LogReal::ZERO]).value() - 8.0).abs() < 1e-12);
        assert_eq!(LogReal::ZERO + LogReal::ZERO, LogReal::ZERO);
        assert!((a.powi(2.0).value() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn survives_underflow() {
        let tiny = LogReal::from_log2(-5000.0);
        let sum = tiny + tiny;
        assert!((sum.log2_value + 4999.0).abs() < 1e-12);
        assert_eq!(tiny.value(), 0.0);
    }

    #[test]
    fn relative_round_trip() {
        for x in [1e-300, 1e-12, 0.3, 1.0, 7.5e200] {
            let back = LogReal::from_value(x).value();
            assert!(((back - x) / x).abs() < 1e-9);
        }
    }
}
