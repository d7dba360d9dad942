//! Bit-exact model of the all-in-one multi-precision multiplier.
//!
//! One restructured CSM is shared by every mode. Float modes run the
//! sign XOR bundle, the programmable exponent adder bundle, the normalizer
//! bundle and the rounder bundle on each CSM lane; integer modes gate all
//! of those off and emit the CSM's selective-adder sum directly.
//!
//! ```
//! use flexmac::multiplier::{multiply, MultMode};
//!
//! let out = multiply(0x38, 0x38, &"fp8a".parse::<MultMode>().unwrap()).unwrap();
//! assert_eq!(out.float_lanes()[0].bits(), 0x38); // 1.0 * 1.0
//!
//! let out = multiply(0x7f, 0x7f, &"int8".parse::<MultMode>().unwrap()).unwrap();
//! assert_eq!(out.int_result(), Some(16129));
//! ```

mod csm;
mod reference;
pub mod verify;

pub use csm::{csm_multiply, sub_mult_5x5, CsmOutput, SUB_MULTIPLIERS};
pub use reference::{reference_float_product, reference_multiply};

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::formats::{default_bias, DataFormat, FloatFormat, FloatValue, IntFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Datatype {
    Float,
    Int,
}

/// Operating mode of one multiplier pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultMode {
    pub datatype: Datatype,
    pub a_sig_width: u32,
    pub b_sig_width: u32,
    /// Required in float mode; ignored (gated) in integer mode.
    pub float_format: Option<FloatFormat>,
    pub int_signed: bool,
    /// Constant subtracted by the exponent adders; ignored in integer mode.
    pub bias: i32,
}

/// Significand width of the datapath a float format rides on.
pub fn significand_width(fmt: FloatFormat) -> u32 {
    if fmt.mantissa_bits() == 7 {
        8
    } else {
        4
    }
}

impl MultMode {
    pub fn float(fmt: FloatFormat) -> Self {
        let w = significand_width(fmt);
        MultMode {
            datatype: Datatype::Float,
            a_sig_width: w,
            b_sig_width: w,
            float_format: Some(fmt),
            int_signed: false,
            bias: default_bias(fmt),
        }
    }

    pub fn int(a_width: u32, b_width: u32, signed: bool) -> Result<Self> {
        let mode = MultMode {
            datatype: Datatype::Int,
            a_sig_width: a_width,
            b_sig_width: b_width,
            float_format: None,
            int_signed: signed,
            bias: 0,
        };
        mode.validate()?;
        Ok(mode)
    }

    /// Single-format mode used by a MAC unit for a layer in `fmt`.
    pub fn for_format(fmt: DataFormat) -> Self {
        match fmt {
            DataFormat::Float(f) => MultMode::float(f),
            DataFormat::Int(i) => MultMode {
                datatype: Datatype::Int,
                a_sig_width: i.width(),
                b_sig_width: i.width(),
                float_format: None,
                int_signed: i.signed(),
                bias: 0,
            },
        }
    }

    pub fn with_bias(mut self, bias: i32) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok_width = |w| w == 4 || w == 8;
        if !ok_width(self.a_sig_width) || !ok_width(self.b_sig_width) {
            return Err(Error::ModeMismatch(format!(
                "significand widths {}x{} not supported",
                self.a_sig_width, self.b_sig_width
            )));
        }
        if self.datatype == Datatype::Float {
            let fmt = self
                .float_format
                .ok_or_else(|| Error::ModeMismatch("float mode without a format".into()))?;
            let w = significand_width(fmt);
            if self.a_sig_width != w || self.b_sig_width != w {
                return Err(Error::ModeMismatch(format!(
                    "{fmt} needs {w}b significands, got {}x{}",
                    self.a_sig_width, self.b_sig_width
                )));
            }
        }
        Ok(())
    }

    /// 1 lane for 8bx8b, 2 for 4bx8b / 8bx4b, 4 for 4bx4b.
    pub fn lanes(&self) -> usize {
        match (self.a_sig_width, self.b_sig_width) {
            (8, 8) => 1,
            (4, 4) => 4,
            _ => 2,
        }
    }

    /// Width of one operand element of `a` as packed at the multiplier input.
    pub fn a_element_width(&self) -> u32 {
        match self.datatype {
            Datatype::Float => self.float_format.map_or(0, |f| f.width()),
            Datatype::Int => self.a_sig_width,
        }
    }

    pub fn b_element_width(&self) -> u32 {
        match self.datatype {
            Datatype::Float => self.float_format.map_or(0, |f| f.width()),
            Datatype::Int => self.b_sig_width,
        }
    }

    pub fn a_int_format(&self) -> Option<IntFormat> {
        (self.datatype == Datatype::Int)
            .then(|| IntFormat::new(self.a_sig_width, self.int_signed).ok())
            .flatten()
    }

    pub fn b_int_format(&self) -> Option<IntFormat> {
        (self.datatype == Datatype::Int)
            .then(|| IntFormat::new(self.b_sig_width, self.int_signed).ok())
            .flatten()
    }

    /// Which sub-logics are switched on in this mode.
    pub fn active_logic(&self) -> ActiveLogic {
        match self.datatype {
            Datatype::Int => ActiveLogic {
                xors: 0,
                exponent_adders: 0,
                normalizers: ArrayVec::new(),
                rounders: 0,
            },
            Datatype::Float => {
                let lanes = self.lanes();
                let kind = if lanes == 1 {
                    LaneKind::Wide
                } else {
                    LaneKind::Narrow
                };
                ActiveLogic {
                    xors: lanes,
                    exponent_adders: lanes,
                    normalizers: std::iter::repeat_n(kind, lanes).collect(),
                    rounders: lanes,
                }
            }
        }
    }
}

impl fmt::Display for MultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.datatype {
            Datatype::Float => match self.float_format {
                Some(fmt) => write!(f, "{fmt}")?,
                None => f.write_str("float?")?,
            },
            Datatype::Int => {
                let u = if self.int_signed { "" } else { "u" };
                if self.a_sig_width == self.b_sig_width {
                    write!(f, "{u}int{}", self.a_sig_width)?
                } else {
                    write!(f, "{u}int{}x{}", self.a_sig_width, self.b_sig_width)?
                }
            }
        }
        if self.datatype == Datatype::Float {
            if let Some(fmt) = self.float_format {
                if self.bias != default_bias(fmt) {
                    write!(f, "@bias{}", self.bias)?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for MultMode {
    type Err = Error;

    /// Accepts every format name plus mixed integer modes `int4x8`,
    /// `int8x4`, `uint4x8`, `uint8x4`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mixed = |rest: &str, signed| match rest {
            "4x8" => MultMode::int(4, 8, signed),
            "8x4" => MultMode::int(8, 4, signed),
            _ => Err(Error::InvalidFormat(s.to_string())),
        };
        if let Some(rest) = lower.strip_prefix("uint") {
            if rest.contains('x') {
                return mixed(rest, false);
            }
        } else if let Some(rest) = lower.strip_prefix("int") {
            if rest.contains('x') {
                return mixed(rest, true);
            }
        }
        Ok(MultMode::for_format(lower.parse()?))
    }
}

/// The five normalizer/rounder instances: one wide, four narrow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneKind {
    Wide,
    Narrow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveLogic {
    pub xors: usize,
    pub exponent_adders: usize,
    pub normalizers: ArrayVec<LaneKind, 4>,
    pub rounders: usize,
}

pub fn sign_xor(sa: u32, sb: u32) -> u32 {
    (sa ^ sb) & 1
}

/// `E_A + E_B - bias`; the result may leave the field range.
pub fn exponent_add(ea: i32, eb: i32, bias: i32) -> i32 {
    let e_add = ea + eb;
    e_add - bias
}

/// Significand with exactly one integer bit: value is `sig / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalized {
    pub sig: u32,
    pub frac_bits: u32,
    pub exp: i32,
}

impl Normalized {
    pub fn is_zero(&self) -> bool {
        self.sig == 0
    }
}

/// Bring a raw significand product back to `1.xxx` form.
///
/// The raw product of two `w`-bit significands has `2(w-1)` fraction bits
/// and lies in `[1, 4)`; a product of 2 or more gains one fraction bit and
/// increments the exponent. No bits are discarded here.
pub fn normalize(raw: u32, exp: i32, kind: LaneKind) -> Normalized {
    let w = match kind {
        LaneKind::Wide => 8,
        LaneKind::Narrow => 4,
    };
    let frac = 2 * (w - 1);
    if raw == 0 {
        return Normalized {
            sig: 0,
            frac_bits: frac,
            exp,
        };
    }
    if raw >> (frac + 1) != 0 {
        Normalized {
            sig: raw,
            frac_bits: frac + 1,
            exp: exp + 1,
        }
    } else {
        Normalized {
            sig: raw,
            frac_bits: frac,
            exp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rounded {
    pub mantissa: u32,
    pub exp: i32,
}

/// Round a normalized significand to the format's mantissa width with
/// round-to-nearest-even; a carry out re-normalizes and bumps the exponent.
pub fn round_lane(n: Normalized, fmt: FloatFormat) -> Rounded {
    let m = fmt.mantissa_bits();
    debug_assert!(n.frac_bits >= m);
    let drop = n.frac_bits - m;
    let mut kept = n.sig >> drop;
    if drop > 0 {
        let rem = n.sig & ((1 << drop) - 1);
        let half = 1 << (drop - 1);
        if rem > half || (rem == half && kept & 1 == 1) {
            kept += 1;
        }
    }
    let mut exp = n.exp;
    if kept >> (m + 1) != 0 {
        kept >>= 1;
        exp += 1;
    }
    Rounded {
        mantissa: kept & fmt.mantissa_mask(),
        exp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneValue {
    Float(FloatValue),
    Int(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultOutput {
    pub lanes: ArrayVec<LaneValue, 4>,
    pub mode: MultMode,
}

impl MultOutput {
    pub fn float_lanes(&self) -> ArrayVec<FloatValue, 4> {
        self.lanes
            .iter()
            .filter_map(|l| match l {
                LaneValue::Float(v) => Some(*v),
                LaneValue::Int(_) => None,
            })
            .collect()
    }

    pub fn int_result(&self) -> Option<i64> {
        match self.lanes.first() {
            Some(LaneValue::Int(v)) => Some(*v),
            _ => None,
        }
    }

    /// Float lanes packed back into one word, lane 0 in the low bits.
    pub fn packed_bits(&self) -> u64 {
        let w = self.mode.a_element_width();
        self.float_lanes()
            .iter()
            .enumerate()
            .fold(0, |acc, (i, v)| acc | (v.bits() as u64) << (w * i as u32))
    }
}

/// Total operand widths `(a, b)` in bits for packed multiplier inputs.
pub fn operand_widths(mode: &MultMode) -> (u32, u32) {
    let lanes = mode.lanes() as u32;
    (
        lanes * mode.a_element_width(),
        lanes * mode.b_element_width(),
    )
}

/// Run one multiplier pass.
///
/// Float operands pack `lanes` encoded values (lane 0 in the low bits);
/// integer operands pack `lanes` two's-complement or unsigned fields.
pub fn multiply(a_bits: u64, b_bits: u64, mode: &MultMode) -> Result<MultOutput> {
    mode.validate()?;
    let (aw, bw) = operand_widths(mode);
    if a_bits >> aw != 0 || b_bits >> bw != 0 {
        return Err(Error::ModeMismatch(format!(
            "operands {a_bits:#x}/{b_bits:#x} exceed {aw}/{bw}-bit inputs of {mode}"
        )));
    }
    match mode.datatype {
        Datatype::Int => {
            let csm = csm_multiply(a_bits, b_bits, mode)?;
            let mut lanes = ArrayVec::new();
            lanes.push(LaneValue::Int(csm.fused_sum.expect("int mode") as i64));
            Ok(MultOutput { lanes, mode: *mode })
        }
        Datatype::Float => Ok(multiply_float(a_bits, b_bits, mode)),
    }
}

fn multiply_float(a_bits: u64, b_bits: u64, mode: &MultMode) -> MultOutput {
    let fmt = mode.float_format.expect("validated");
    let lanes = mode.lanes();
    let w = fmt.width();
    let sw = mode.a_sig_width;
    // Mantissas narrower than the datapath are padded with zero LSBs.
    let pad = (sw - 1) - fmt.mantissa_bits();
    let kind = if lanes == 1 {
        LaneKind::Wide
    } else {
        LaneKind::Narrow
    };

    let field = |x: u64, i: usize| ((x >> (w * i as u32)) & ((1 << w) - 1)) as u32;
    let sig = |bits: u32| ((1 << fmt.mantissa_bits()) | fmt.mantissa_of(bits)) << pad;

    let (mut sa, mut sb) = (0u64, 0u64);
    for i in 0..lanes {
        sa |= (sig(field(a_bits, i)) as u64) << (sw * i as u32);
        sb |= (sig(field(b_bits, i)) as u64) << (sw * i as u32);
    }
    let csm = csm_multiply(sa, sb, mode).expect("significands fit the datapath");

    let out = (0..lanes)
        .map(|i| {
            let (a, b) = (field(a_bits, i), field(b_bits, i));
            let (ea, eb) = (fmt.exponent_of(a), fmt.exponent_of(b));
            let zero = FloatValue::new(0, fmt).expect("zero fits");
            if ea == 0 || eb == 0 {
                return LaneValue::Float(zero);
            }
            let sign = sign_xor(fmt.sign_of(a), fmt.sign_of(b));
            let e = exponent_add(ea as i32, eb as i32, mode.bias);
            let n = normalize(csm.lanes[i] as u32, e, kind);
            if n.exp < 1 {
                return LaneValue::Float(zero);
            }
            let r = round_lane(n, fmt);
            let bits = if r.exp > fmt.max_exponent_field() as i32 {
                fmt.pack(sign, 0, 0) | fmt.max_finite_bits()
            } else {
                fmt.pack(sign, r.exp as u32, r.mantissa)
            };
            LaneValue::Float(FloatValue::new(bits, fmt).expect("packed in range"))
        })
        .collect();
    MultOutput {
        lanes: out,
        mode: *mode,
    }
}
