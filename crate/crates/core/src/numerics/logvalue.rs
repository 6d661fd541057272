use serde::{Deserialize, Serialize};

/// A nonnegative quantity carried together with its natural logarithm.
///
/// Bounds of the form `exp(-x N)` are routinely far below `1e-300`; the
/// logarithm keeps them comparable after `value` has underflowed to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    /// Natural logarithm of the value (`-inf` for an exact zero).
    #[serde(rename = "exponent")]
    pub ln: f64,
    pub value: f64,
}

impl LogValue {
    pub const ONE: LogValue = LogValue { ln: 0.0, value: 1.0 };

    pub fn from_ln(ln: f64) -> Self {
        Self { ln, value: ln.exp() }
    }

    pub fn from_value(value: f64) -> Self {
        Self { ln: value.ln(), value }
    }

    /// `coef * exp(exponent)` with `coef > 0`.
    pub fn scaled_exp(coef: f64, exponent: f64) -> Self {
        Self::from_ln(coef.ln() + exponent)
    }

    pub fn log10(&self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    pub fn add(self, other: LogValue) -> LogValue {
        LogValue {
            ln: ln_add_exp(self.ln, other.ln),
            value: self.value + other.value,
        }
    }

    pub fn mul(self, other: LogValue) -> LogValue {
        LogValue {
            ln: self.ln + other.ln,
            value: self.value * other.value,
        }
    }

    pub fn max(self, other: LogValue) -> LogValue {
        if other.ln > self.ln {
            other
        } else {
            self
        }
    }
}

/// `ln(e^a + e^b)` without overflow or underflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
