//! Numeric formats and their bit-level codecs.
//!
//! Floating-point formats here have no NaN, no infinities and no
//! subnormals: an all-zero exponent field is exact zero and the all-ones
//! exponent is an ordinary binade. Rounding is round-to-nearest-even,
//! magnitudes below the smallest normal flush to zero and magnitudes that
//! round past the largest finite value saturate.

mod exact;

pub use exact::{Dyadic, ExactValue};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// `{1, exponent_bits, mantissa_bits}` float layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    exponent_bits: u32,
    mantissa_bits: u32,
}

impl FloatFormat {
    pub const BF16: FloatFormat = FloatFormat {
        exponent_bits: 8,
        mantissa_bits: 7,
    };
    pub const FP8A: FloatFormat = FloatFormat {
        exponent_bits: 4,
        mantissa_bits: 3,
    };
    pub const FP8B: FloatFormat = FloatFormat {
        exponent_bits: 5,
        mantissa_bits: 2,
    };

    pub fn new(exponent_bits: u32, mantissa_bits: u32) -> Result<Self> {
        if !(1..=8).contains(&exponent_bits) || ![2, 3, 7].contains(&mantissa_bits) {
            return Err(Error::InvalidFormat(format!(
                "fp{exponent_bits}_{mantissa_bits}"
            )));
        }
        Ok(FloatFormat {
            exponent_bits,
            mantissa_bits,
        })
    }

    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn width(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    pub fn default_bias(&self) -> i32 {
        default_bias(*self)
    }

    /// Largest exponent field value (all ones).
    pub fn max_exponent_field(&self) -> u32 {
        (1 << self.exponent_bits) - 1
    }

    pub fn mantissa_mask(&self) -> u32 {
        (1 << self.mantissa_bits) - 1
    }

    /// Positive max-finite bit pattern: exponent and mantissa all ones.
    pub fn max_finite_bits(&self) -> u32 {
        (self.max_exponent_field() << self.mantissa_bits) | self.mantissa_mask()
    }

    pub fn sign_of(&self, bits: u32) -> u32 {
        (bits >> (self.exponent_bits + self.mantissa_bits)) & 1
    }

    pub fn exponent_of(&self, bits: u32) -> u32 {
        (bits >> self.mantissa_bits) & self.max_exponent_field()
    }

    pub fn mantissa_of(&self, bits: u32) -> u32 {
        bits & self.mantissa_mask()
    }

    pub fn pack(&self, sign: u32, exponent: u32, mantissa: u32) -> u32 {
        (sign << (self.exponent_bits + self.mantissa_bits))
            | (exponent << self.mantissa_bits)
            | mantissa
    }

    /// Largest finite magnitude under `bias`.
    pub fn max_finite(&self, bias: i32) -> Dyadic {
        let sig = (1i128 << (self.mantissa_bits + 1)) - 1;
        Dyadic::new(
            sig,
            self.max_exponent_field() as i32 - bias - self.mantissa_bits as i32,
        )
    }

    /// Smallest normal magnitude under `bias`.
    pub fn min_normal(&self, bias: i32) -> Dyadic {
        Dyadic::new(1, 1 - bias)
    }

    fn canonical_name(&self) -> Option<&'static str> {
        match *self {
            FloatFormat::BF16 => Some("bf16"),
            FloatFormat::FP8A => Some("fp8a"),
            FloatFormat::FP8B => Some("fp8b"),
            _ => None,
        }
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.canonical_name() {
            Some(name) => f.write_str(name),
            None => write!(f, "fp{}_{}", self.exponent_bits, self.mantissa_bits),
        }
    }
}

/// `2^(exponent_bits - 1) - 1`.
pub fn default_bias(fmt: FloatFormat) -> i32 {
    (1 << (fmt.exponent_bits - 1)) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntFormat {
    width: u32,
    signed: bool,
}

impl IntFormat {
    pub const INT8: IntFormat = IntFormat {
        width: 8,
        signed: true,
    };
    pub const INT4: IntFormat = IntFormat {
        width: 4,
        signed: true,
    };
    pub const UINT8: IntFormat = IntFormat {
        width: 8,
        signed: false,
    };
    pub const UINT4: IntFormat = IntFormat {
        width: 4,
        signed: false,
    };

    pub fn new(width: u32, signed: bool) -> Result<Self> {
        if width != 4 && width != 8 {
            return Err(Error::InvalidFormat(format!(
                "{}int{width}",
                if signed { "" } else { "u" }
            )));
        }
        Ok(IntFormat { width, signed })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn min_value(&self) -> i64 {
        if self.signed {
            -(1 << (self.width - 1))
        } else {
            0
        }
    }

    pub fn max_value(&self) -> i64 {
        if self.signed {
            (1 << (self.width - 1)) - 1
        } else {
            (1 << self.width) - 1
        }
    }
}

impl fmt::Display for IntFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}int{}", if self.signed { "" } else { "u" }, self.width)
    }
}

pub fn decode_int(bits: u32, fmt: IntFormat) -> Result<i64> {
    if fmt.width < 32 && bits >> fmt.width != 0 {
        return Err(Error::BitsOutOfRange {
            bits: bits as u64,
            width: fmt.width,
        });
    }
    let v = bits as i64;
    if fmt.signed && (bits >> (fmt.width - 1)) & 1 == 1 {
        Ok(v - (1 << fmt.width))
    } else {
        Ok(v)
    }
}

pub fn encode_int(v: i64, fmt: IntFormat) -> Result<u32> {
    if v < fmt.min_value() || v > fmt.max_value() {
        return Err(Error::IntOutOfRange {
            value: v,
            format: fmt.to_string(),
        });
    }
    Ok((v as u32) & ((1u32 << fmt.width) - 1))
}

/// Any element format a layer or multiplier operand can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataFormat {
    Float(FloatFormat),
    Int(IntFormat),
}

impl DataFormat {
    pub const BF16: DataFormat = DataFormat::Float(FloatFormat::BF16);
    pub const FP8A: DataFormat = DataFormat::Float(FloatFormat::FP8A);
    pub const FP8B: DataFormat = DataFormat::Float(FloatFormat::FP8B);
    pub const INT8: DataFormat = DataFormat::Int(IntFormat::INT8);
    pub const INT4: DataFormat = DataFormat::Int(IntFormat::INT4);
    pub const UINT8: DataFormat = DataFormat::Int(IntFormat::UINT8);
    pub const UINT4: DataFormat = DataFormat::Int(IntFormat::UINT4);

    pub fn width(&self) -> u32 {
        match self {
            DataFormat::Float(f) => f.width(),
            DataFormat::Int(i) => i.width(),
        }
    }

    pub fn is_float(&self) -> bool {
        matches!(self, DataFormat::Float(_))
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFormat::Float(x) => x.fmt(f),
            DataFormat::Int(x) => x.fmt(f),
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let fmt = match s.as_str() {
            "bf16" | "bfloat16" => DataFormat::BF16,
            "fp8a" => DataFormat::FP8A,
            "fp8b" => DataFormat::FP8B,
            "int8" => DataFormat::INT8,
            "int4" => DataFormat::INT4,
            "uint8" => DataFormat::UINT8,
            "uint4" => DataFormat::UINT4,
            other => {
                let generic = other
                    .strip_prefix("fp")
                    .and_then(|rest| rest.split_once('_'))
                    .and_then(|(e, m)| Some((e.parse().ok()?, m.parse().ok()?)));
                match generic {
                    Some((e, m)) => DataFormat::Float(FloatFormat::new(e, m)?),
                    None => return Err(Error::InvalidFormat(s)),
                }
            }
        };
        Ok(fmt)
    }
}

impl Serialize for DataFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DataFormat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A float bit pattern together with the bias used to interpret it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatValue {
    bits: u32,
    format: FloatFormat,
    bias_override: Option<i32>,
}

impl FloatValue {
    pub fn new(bits: u32, format: FloatFormat) -> Result<Self> {
        if bits >> format.width() != 0 {
            return Err(Error::BitsOutOfRange {
                bits: bits as u64,
                width: format.width(),
            });
        }
        Ok(FloatValue {
            bits,
            format,
            bias_override: None,
        })
    }

    pub fn with_bias(mut self, bias: i32) -> Self {
        self.bias_override = (bias != self.format.default_bias()).then_some(bias);
        self
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn bias_override(&self) -> Option<i32> {
        self.bias_override
    }

    pub fn bias(&self) -> i32 {
        self.bias_override.unwrap_or(self.format.default_bias())
    }

    pub fn sign(&self) -> u32 {
        self.format.sign_of(self.bits)
    }

    pub fn exponent(&self) -> u32 {
        self.format.exponent_of(self.bits)
    }

    pub fn mantissa(&self) -> u32 {
        self.format.mantissa_of(self.bits)
    }

    pub fn is_zero(&self) -> bool {
        self.exponent() == 0
    }

    pub fn decode(&self) -> ExactValue {
        decode_float(*self)
    }
}

/// Exact value of a float pattern: `(-1)^S * 1.M * 2^(E - bias)`, or zero
/// when the exponent field is zero.
pub fn decode_float(v: FloatValue) -> ExactValue {
    let fmt = v.format;
    let e = v.exponent();
    if e == 0 {
        return ExactValue::Zero;
    }
    let sig = ((1u32 << fmt.mantissa_bits) | v.mantissa()) as i128;
    let signed = if v.sign() == 1 { -sig } else { sig };
    ExactValue::Finite(Dyadic::new(
        signed,
        e as i32 - v.bias() - fmt.mantissa_bits as i32,
    ))
}

/// Encode an exact value with round-to-nearest-even, flush-to-zero below the
/// smallest normal and saturation above the largest finite value.
pub fn encode_float(x: ExactValue, fmt: FloatFormat, bias: i32) -> FloatValue {
    let make = |bits| {
        FloatValue {
            bits,
            format: fmt,
            bias_override: None,
        }
        .with_bias(bias)
    };

    let d = match x {
        ExactValue::Zero => return make(0),
        ExactValue::SaturatedMax => return make(fmt.max_finite_bits()),
        ExactValue::SaturatedMin => return make(fmt.pack(1, 0, 0) | fmt.max_finite_bits()),
        ExactValue::Finite(d) if d.is_zero() => return make(0),
        ExactValue::Finite(d) => d,
    };

    let sign = d.is_negative() as u32;
    let saturated = make(fmt.pack(sign, 0, 0) | fmt.max_finite_bits());
    let mut log2 = d.floor_log2().expect("nonzero");
    if log2 + bias < 1 {
        return make(0);
    }
    if log2 + bias > fmt.max_exponent_field() as i32 {
        return saturated;
    }

    // Integer significand with `frac` fraction bits: |d| = sig * 2^(log2 - frac).
    let mag = d.mantissa().unsigned_abs();
    let frac = 127 - mag.leading_zeros();
    let m = fmt.mantissa_bits;
    let mut q = if frac <= m {
        mag << (m - frac)
    } else {
        let drop = frac - m;
        let kept = mag >> drop;
        let rem = mag & ((1u128 << drop) - 1);
        let half = 1u128 << (drop - 1);
        if rem > half || (rem == half && kept & 1 == 1) {
            kept + 1
        } else {
            kept
        }
    };
    if q >> (m + 1) != 0 {
        q >>= 1;
        log2 += 1;
    }
    let e = log2 + bias;
    if e > fmt.max_exponent_field() as i32 {
        return saturated;
    }
    make(fmt.pack(sign, e as u32, (q as u32) & fmt.mantissa_mask()))
}
