//! Exact-arithmetic oracle for the multiplier.

use arrayvec::ArrayVec;

use super::{operand_widths, Datatype, LaneValue, MultMode, MultOutput};
use crate::error::{Error, Result};
use crate::formats::{decode_int, encode_float, ExactValue, FloatValue};

/// Exact product of two values, re-encoded at the format's default bias.
///
/// `bias` is the constant the exponent adder subtracts; a bias `s` below the
/// default scales the product by `2^s`.
pub fn reference_float_product(a: FloatValue, b: FloatValue, bias: i32) -> FloatValue {
    let fmt = a.format();
    let exact = match (a.decode().as_dyadic(), b.decode().as_dyadic()) {
        (Some(x), Some(y)) => x * y,
        _ => unreachable!("decode never saturates"),
    };
    let scaled = exact.scale_pow2(fmt.default_bias() - bias);
    encode_float(ExactValue::from_dyadic(scaled), fmt, fmt.default_bias())
}

/// Same contract as [`multiply`](super::multiply), computed by decoding every
/// lane exactly, multiplying, and applying the rounding policy once.
pub fn reference_multiply(a_bits: u64, b_bits: u64, mode: &MultMode) -> Result<MultOutput> {
    mode.validate()?;
    let (aw, bw) = operand_widths(mode);
    if a_bits >> aw != 0 || b_bits >> bw != 0 {
        return Err(Error::ModeMismatch(format!(
            "operands exceed {aw}/{bw}-bit inputs of {mode}"
        )));
    }
    let lanes = mode.lanes();
    let (ew_a, ew_b) = (mode.a_element_width(), mode.b_element_width());
    let field = |x: u64, w: u32, i: usize| ((x >> (w * i as u32)) & ((1 << w) - 1)) as u32;

    let mut out = ArrayVec::new();
    match mode.datatype {
        Datatype::Int => {
            let (fa, fb) = (mode.a_int_format().unwrap(), mode.b_int_format().unwrap());
            let mut sum = 0i64;
            for i in 0..lanes {
                sum += decode_int(field(a_bits, ew_a, i), fa)?
                    * decode_int(field(b_bits, ew_b, i), fb)?;
            }
            out.push(LaneValue::Int(sum));
        }
        Datatype::Float => {
            let fmt = mode.float_format.unwrap();
            for i in 0..lanes {
                let a = FloatValue::new(field(a_bits, ew_a, i), fmt)?;
                let b = FloatValue::new(field(b_bits, ew_b, i), fmt)?;
                out.push(LaneValue::Float(reference_float_product(a, b, mode.bias)));
            }
        }
    }
    Ok(MultOutput {
        lanes: out,
        mode: *mode,
    })
}
