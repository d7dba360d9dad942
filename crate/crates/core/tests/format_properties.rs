use flexmac::formats::{decode_float, encode_float, ExactValue, FloatFormat, FloatValue};
use flexmac::multiplier::{multiply, LaneValue, MultMode};
use proptest::prelude::*;

fn small_format() -> impl Strategy<Value = FloatFormat> {
    (1u32..=8, prop_oneof![Just(2u32), Just(3), Just(7)])
        .prop_filter("fits 16 bits", |(e, m)| 1 + e + m <= 16)
        .prop_map(|(e, m)| FloatFormat::new(e, m).unwrap())
}

fn pattern(fmt: FloatFormat) -> impl Strategy<Value = FloatValue> {
    (0u32..(1 << fmt.width())).prop_map(move |b| FloatValue::new(b, fmt).unwrap())
}

proptest! {
    #[test]
    fn encode_decode_round_trip((fmt, v) in small_format().prop_flat_map(|f| (Just(f), pattern(f)))) {
        let back = encode_float(decode_float(v), fmt, fmt.default_bias());
        let expect = if v.is_zero() { 0 } else { v.bits() };
        prop_assert_eq!(back.bits(), expect);
    }

    #[test]
    fn decode_is_monotone((fmt, a, b) in small_format().prop_flat_map(|f| {
        let half = 1u32 << (f.width() - 1);
        (Just(f), 0..half, 0..half)
    })) {
        let (lo, hi) = (a.min(b), a.max(b));
        let dl = decode_float(FloatValue::new(lo, fmt).unwrap()).as_dyadic().unwrap();
        let dh = decode_float(FloatValue::new(hi, fmt).unwrap()).as_dyadic().unwrap();
        prop_assert!(dl <= dh);
    }

    #[test]
    fn bias_override_scales_decode(
        (fmt, v) in small_format().prop_flat_map(|f| (Just(f), pattern(f))),
        s in -4i32..=4,
    ) {
        let base = decode_float(v);
        let shifted = decode_float(v.with_bias(fmt.default_bias() - s));
        match (base, shifted) {
            (ExactValue::Zero, ExactValue::Zero) => {}
            (ExactValue::Finite(x), ExactValue::Finite(y)) => prop_assert_eq!(x.scale_pow2(s), y),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn lanes_are_independent(a in any::<u32>(), b in any::<u32>(), flip in any::<u8>(), lane in 0usize..4,
                             name in prop_oneof![Just("fp8a"), Just("fp8b")]) {
        let m: MultMode = name.parse().unwrap();
        let base = multiply(a as u64, b as u64, &m).unwrap();
        let a2 = (a ^ ((flip as u32) << (8 * lane))) as u64;
        let other = multiply(a2, b as u64, &m).unwrap();
        for j in (0..4).filter(|&j| j != lane) {
            prop_assert_eq!(base.lanes[j], other.lanes[j]);
        }
    }

    #[test]
    fn products_commute(a in any::<u32>(), b in any::<u32>(),
                        name in prop_oneof![Just("fp8a"), Just("fp8b"), Just("bf16"), Just("int8"), Just("int4"), Just("uint4")]) {
        let m: MultMode = name.parse().unwrap();
        let (aw, _) = flexmac::multiplier::operand_widths(&m);
        let mask = (1u64 << aw) - 1;
        let (a, b) = (a as u64 & mask, b as u64 & mask);
        prop_assert_eq!(multiply(a, b, &m).unwrap(), multiply(b, a, &m).unwrap());
    }

    #[test]
    fn sign_is_xor(a in 0u32..0x10000, b in 0u32..0x10000) {
        let m: MultMode = "bf16".parse().unwrap();
        let out = multiply(a as u64, b as u64, &m).unwrap();
        let p = out.float_lanes()[0];
        if !p.is_zero() {
            prop_assert_eq!(p.sign(), ((a >> 15) ^ (b >> 15)) & 1);
        }
    }

    #[test]
    fn int_mode_ignores_float_fields(a in 0u64..256, b in 0u64..256, bias in -20i32..20, fmt in small_format()) {
        let m: MultMode = "int8".parse().unwrap();
        let mut perturbed = m;
        perturbed.bias = bias;
        perturbed.float_format = Some(fmt);
        let r = multiply(a, b, &m).unwrap();
        let p = multiply(a, b, &perturbed).unwrap();
        prop_assert_eq!(r.lanes.as_slice(), p.lanes.as_slice());
        prop_assert!(matches!(r.lanes[0], LaneValue::Int(_)));
    }
}
