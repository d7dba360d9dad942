//! Exact dyadic rationals for codecs and oracles.
//!
//! Every value a supported format can represent is `m * 2^e` for integers
//! `m` and `e`, and products of two such values stay dyadic. A scaled
//! 128-bit mantissa is therefore enough to evaluate any product of two
//! operands without rounding.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Mul, Neg};

/// `mant * 2^exp`, kept canonical: `mant` is odd, or `mant == 0 && exp == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: i128,
    exp: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mant: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { mant: 1, exp: 0 };

    pub fn new(mant: i128, exp: i32) -> Self {
        if mant == 0 {
            return Self::ZERO;
        }
        let tz = mant.trailing_zeros();
        Dyadic {
            mant: mant >> tz,
            exp: exp + tz as i32,
        }
    }

    pub fn from_int(v: i64) -> Self {
        Self::new(v as i128, 0)
    }

    /// Exact conversion; `None` for NaN and infinities.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Self::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), biased - 1075)
        };
        Some(Self::new(sign * mant, exp))
    }

    pub fn from_f32(x: f32) -> Option<Self> {
        Self::from_f64(x as f64)
    }

    pub fn mantissa(&self) -> i128 {
        self.mant
    }

    pub fn exponent(&self) -> i32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0
    }

    pub fn is_negative(&self) -> bool {
        self.mant < 0
    }

    pub fn abs(&self) -> Self {
        Dyadic {
            mant: self.mant.abs(),
            exp: self.exp,
        }
    }

    /// Multiply by `2^k`.
    pub fn scale_pow2(&self, k: i32) -> Self {
        if self.is_zero() {
            return *self;
        }
        Dyadic {
            mant: self.mant,
            exp: self.exp + k,
        }
    }

    /// `floor(log2(|self|))`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i32> {
        if self.is_zero() {
            return None;
        }
        let bitlen = 128 - self.mant.unsigned_abs().leading_zeros() as i32;
        Some(self.exp + bitlen - 1)
    }

    /// Nearest `f64` (exact whenever the value fits in 53 significant bits
    /// and the f64 exponent range, which holds for every format here).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let m = self.mant as f64;
        let mut e = self.exp;
        let mut v = m;
        // powi on large magnitudes loses nothing for powers of two until overflow.
        while e > 0 {
            let step = e.min(1000);
            v *= 2f64.powi(step);
            e -= step;
        }
        while e < 0 {
            let step = (-e).min(1000);
            v /= 2f64.powi(step);
            e += step;
        }
        v
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: Dyadic) -> Dyadic {
        Dyadic::new(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        Dyadic {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = self.mant.signum();
        let sb = other.mant.signum();
        if sa != sb {
            return sa.cmp(&sb);
        }
        if sa == 0 {
            return Ordering::Equal;
        }
        let la = self.floor_log2().unwrap();
        let lb = other.floor_log2().unwrap();
        let mag = if la != lb {
            la.cmp(&lb)
        } else {
            // Same binade: align to the smaller exponent; shift is < 128.
            let e = self.exp.min(other.exp);
            let a = self.mant.unsigned_abs() << (self.exp - e);
            let b = other.mant.unsigned_abs() << (other.exp - e);
            a.cmp(&b)
        };
        if sa < 0 {
            mag.reverse()
        } else {
            mag
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_f64())
    }
}

/// Result of an exact evaluation, or a saturation marker for values that
/// left the representable range of the target format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactValue {
    Zero,
    Finite(Dyadic),
    SaturatedMax,
    SaturatedMin,
}

impl ExactValue {
    pub fn from_dyadic(d: Dyadic) -> Self {
        if d.is_zero() {
            ExactValue::Zero
        } else {
            ExactValue::Finite(d)
        }
    }

    /// The rational value, with saturation markers mapped to `None`.
    pub fn as_dyadic(&self) -> Option<Dyadic> {
        match self {
            ExactValue::Zero => Some(Dyadic::ZERO),
            ExactValue::Finite(d) => Some(*d),
            _ => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExactValue::Zero => 0.0,
            ExactValue::Finite(d) => d.to_f64(),
            ExactValue::SaturatedMax => f64::INFINITY,
            ExactValue::SaturatedMin => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactValue::Zero => f.write_str("0.0"),
            ExactValue::Finite(d) => d.fmt(f),
            ExactValue::SaturatedMax => f.write_str("+sat"),
            ExactValue::SaturatedMin => f.write_str("-sat"),
        }
    }
}
