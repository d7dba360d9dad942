//! Restructured carry-save multiplier: four signed 5b x 5b sub-multipliers
//! whose results are selectively shifted and added.

use arrayvec::ArrayVec;

use super::{Datatype, MultMode};
use crate::error::{Error, Result};

pub const SUB_MULTIPLIERS: usize = 4;

/// Signed 5-bit by 5-bit product built from a partial-product array.
///
/// Operands are two's-complement values in `-16..=15`; an unsigned 4-bit
/// nibble enters with a zero sign bit. The array sums the 4x4 magnitude
/// partial products, subtracts the sign-weighted rows and adds the sign
/// product, so no native multiply is involved.
pub fn sub_mult_5x5(a: i8, b: i8) -> i16 {
    debug_assert!((-16..=15).contains(&a) && (-16..=15).contains(&b));
    let abits = (a as u8) & 0x1f;
    let bbits = (b as u8) & 0x1f;
    let bit = |x: u8, i: u32| ((x >> i) & 1) as i16;

    let mut acc: i16 = 0;
    for i in 0..4 {
        for j in 0..4 {
            if bit(abits, i) & bit(bbits, j) == 1 {
                acc += 1 << (i + j);
            }
        }
    }
    let (sa, sb) = (bit(abits, 4), bit(bbits, 4));
    for j in 0..4 {
        if sa & bit(bbits, j) == 1 {
            acc -= 1 << (j + 4);
        }
    }
    for i in 0..4 {
        if sb & bit(abits, i) == 1 {
            acc -= 1 << (i + 4);
        }
    }
    if sa & sb == 1 {
        acc += 1 << 8;
    }
    acc
}

/// Raw CSM products: one word per lane, plus the selective-adder sum in
/// integer mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsmOutput {
    pub lanes: ArrayVec<i32, 4>,
    pub lane_width: u32,
    pub fused_sum: Option<i32>,
}

impl CsmOutput {
    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }
}

/// Split a `width`-bit operand into 4-bit nibbles, low nibble first. Only
/// the most significant nibble carries the sign.
fn nibbles(x: u32, width: u32, signed: bool) -> ArrayVec<i8, 2> {
    let n = width / 4;
    (0..n)
        .map(|i| {
            let nib = ((x >> (4 * i)) & 0xf) as i8;
            if signed && i == n - 1 && nib & 0x8 != 0 {
                nib - 16
            } else {
                nib
            }
        })
        .collect()
}

/// Multiply packed operands on the restructured CSM.
///
/// Operand `a` packs `lanes` fields of `a_sig_width` bits (lane 0 in the
/// low bits), likewise `b`. In float mode the fields are unsigned
/// significands with the hidden bit included.
pub fn csm_multiply(a_bits: u64, b_bits: u64, mode: &MultMode) -> Result<CsmOutput> {
    mode.validate()?;
    let (aw, bw) = (mode.a_sig_width, mode.b_sig_width);
    let lanes = mode.lanes();
    let (a_total, b_total) = (aw * lanes as u32, bw * lanes as u32);
    if a_bits >> a_total != 0 || b_bits >> b_total != 0 {
        return Err(Error::ModeMismatch(format!(
            "operands {a_bits:#x}/{b_bits:#x} exceed {a_total}/{b_total}-bit inputs of {mode}"
        )));
    }
    let signed = mode.datatype == Datatype::Int && mode.int_signed;

    let mut out = ArrayVec::new();
    let mut used = 0;
    for lane in 0..lanes {
        let a = ((a_bits >> (aw * lane as u32)) & ((1 << aw) - 1)) as u32;
        let b = ((b_bits >> (bw * lane as u32)) & ((1 << bw) - 1)) as u32;
        let mut product: i32 = 0;
        for (p, &an) in nibbles(a, aw, signed).iter().enumerate() {
            for (q, &bn) in nibbles(b, bw, signed).iter().enumerate() {
                used += 1;
                product += (sub_mult_5x5(an, bn) as i32) << (4 * (p + q));
            }
        }
        out.push(product);
    }
    debug_assert_eq!(used, SUB_MULTIPLIERS);

    let fused_sum = (mode.datatype == Datatype::Int).then(|| out.iter().sum());
    Ok(CsmOutput {
        lanes: out,
        lane_width: aw + bw,
        fused_sum,
    })
}
