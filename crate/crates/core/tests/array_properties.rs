use flexmac::array::{
    configure, execute_gemm, gemm_oracle, map_layer, map_layer_rigid, utilization, ConvDims,
    DwConvDims, FusionPattern, GemmDims, LayerOp, LayerSpec, Mapping, Partition, RigidSA, Scheme,
    Step, Tensor, GEOMETRY,
};
use flexmac::formats::DataFormat;
use flexmac::multiplier::MultMode;
use flexmac::timing::{event_oracle, tile_cycles};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FORMATS: [DataFormat; 7] = [
    DataFormat::INT8,
    DataFormat::INT4,
    DataFormat::UINT8,
    DataFormat::UINT4,
    DataFormat::FP8A,
    DataFormat::FP8B,
    DataFormat::BF16,
];

fn random_tensor(rng: &mut ChaCha8Rng, fmt: DataFormat, rows: usize, cols: usize) -> Tensor {
    let max = 1u64 << fmt.width();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(0..max) as u32)
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

#[test]
fn tile_formula_matches_event_oracle() {
    let mut n = 0;
    for r in 1..=8 {
        for c in 1..=8 {
            for t in 1..=32 {
                assert_eq!(
                    tile_cycles(r, c, t),
                    event_oracle(r, c, t),
                    "{r}x{c}, {t} inputs"
                );
                n += 1;
            }
        }
    }
    assert_eq!(n, 2048);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fusion_is_invisible_to_results(
        m in 1usize..=256,
        k in 1usize..=256,
        n in 1usize..=256,
        f in 0..FORMATS.len(),
        seed in any::<u64>(),
    ) {
        let fmt = FORMATS[f];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tensor(&mut rng, fmt, m, k);
        let b = random_tensor(&mut rng, fmt, k, n);
        let expected = gemm_oracle(fmt, &a, &b).unwrap();
        for p in FusionPattern::ALL {
            let config = configure(p, &[MultMode::for_format(fmt)]).unwrap();
            prop_assert_eq!(&execute_gemm(&config, fmt, &a, &b).unwrap(), &expected, "{} on {}", fmt, p);
        }
    }
}

fn layer_strategy() -> impl Strategy<Value = LayerSpec> {
    let conv = (
        1u32..=4,
        1u32..=96,
        1u32..=96,
        1u32..=20,
        1u32..=3,
        1u32..=2,
        0usize..3,
    )
        .prop_map(|(n, c_in, c_out, hw, kk, stride, step)| {
            let k = [1, 3, 5, 7, 11][(kk as usize + step) % 5].min(hw);
            let d = ConvDims {
                n,
                c_in,
                c_out,
                h: hw,
                w: hw,
                k,
                stride,
                pad: None,
            };
            LayerSpec::new(
                "conv",
                LayerOp::Conv(d),
                [Step::Fw, Step::Bw, Step::Wg][step],
            )
        });
    let dw = (
        1u32..=4,
        1u32..=300,
        1u32..=30,
        0usize..4,
        1u32..=2,
        0usize..3,
    )
        .prop_map(|(n, c, hw, kk, stride, step)| {
            let k = [1, 3, 5, 7][kk].min(hw);
            let d = DwConvDims {
                n,
                c,
                h: hw,
                w: hw,
                k,
                stride,
                pad: None,
            };
            LayerSpec::new(
                "dw",
                LayerOp::Dwconv(d),
                [Step::Fw, Step::Bw, Step::Wg][step],
            )
        });
    let gemm = (1u32..=300, 1u32..=300, 1u32..=300, 0usize..3).prop_map(|(m, k, n, step)| {
        LayerSpec::new(
            "gemm",
            LayerOp::Gemm(GemmDims { m, k, n }),
            [Step::Fw, Step::Bw, Step::Wg][step],
        )
    });
    (prop_oneof![conv, dw, gemm], 0..FORMATS.len()).prop_map(|(l, f)| l.with_format(FORMATS[f]))
}

fn partitions() -> Vec<Partition> {
    let mut out = vec![];
    for p in FusionPattern::ALL {
        out.extend(p.partitions());
    }
    out
}

/// Outputs a partition can drain per cycle: one per subarray column plus
/// one per LRMU group.
fn output_ports(p: &Partition, m: &Mapping) -> u64 {
    let g = GEOMETRY;
    let blocks = p.blocks.len() as u64;
    let lrmu = m.lrmu.map_or(0, |l| l.groups as u64);
    blocks * (g.subarrays_per_block as u64 * g.columns as u64 + lrmu)
}

/// Multiplications of the original loop nest, counted one by one.
fn loop_count(l: &LayerSpec) -> u64 {
    let mut count = 0u64;
    match (l.op, l.step) {
        (LayerOp::Gemm(d), _) => {
            for _ in 0..d.m {
                for _ in 0..d.n {
                    count += d.k as u64;
                }
            }
        }
        (LayerOp::Conv(d), Step::Bw) => {
            // every input pixel gathers from c_out channels through k*k taps
            for _ in 0..d.n * d.h * d.w {
                for _ in 0..d.c_in {
                    count += (d.c_out * d.k * d.k) as u64;
                }
            }
        }
        (LayerOp::Conv(d), _) => {
            let (oh, ow) = (out(d.h, d.k, d.stride), out(d.w, d.k, d.stride));
            for _ in 0..d.n * oh * ow {
                for _ in 0..d.c_out {
                    count += (d.c_in * d.k * d.k) as u64;
                }
            }
        }
        (LayerOp::Dwconv(d), Step::Bw) => {
            for _ in 0..d.n * d.h * d.w {
                count += (d.c * d.k * d.k) as u64;
            }
        }
        (LayerOp::Dwconv(d), _) => {
            let (oh, ow) = (out(d.h, d.k, d.stride), out(d.w, d.k, d.stride));
            for _ in 0..d.n * oh * ow {
                count += (d.c * d.k * d.k) as u64;
            }
        }
        (LayerOp::Vector(_), _) => {}
    }
    count
}

/// Output size with the default same-style padding of `k / 2`.
fn out(x: u32, k: u32, stride: u32) -> u32 {
    (x + 2 * (k / 2) - k) / stride + 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn flexible_never_below_rigid(l in layer_strategy()) {
        for p in partitions() {
            let flex = map_layer(&l, &p, None).unwrap();
            let rigid = map_layer_rigid(&l, &RigidSA::new(p.rows, p.cols), None).unwrap();
            prop_assert!(
                utilization(&flex) >= utilization(&rigid),
                "{:?} on {}x{}: {} < {}", l.op, p.rows, p.cols, utilization(&flex), utilization(&rigid)
            );
        }
    }

    #[test]
    fn outputs_fit_the_bus(l in layer_strategy()) {
        for p in partitions() {
            let flex = map_layer(&l, &p, None).unwrap();
            for c in &flex.classes {
                prop_assert!(c.mapped_units <= p.units());
                let limit = match (flex.scheme, flex.lrmu) {
                    (Scheme::Unaccumulable, Some(_)) => output_ports(&p, &flex),
                    _ => p.cols as u64,
                };
                prop_assert!(c.psum_streams <= limit, "{} streams > {}", c.psum_streams, limit);
            }
            let sa = RigidSA::new(p.rows, p.cols);
            let rigid = map_layer_rigid(&l, &sa, None).unwrap();
            for c in &rigid.classes {
                prop_assert!(c.psum_streams <= sa.output_bus_width() as u64);
                prop_assert!(c.mapped_units <= sa.units());
            }
        }
    }

    #[test]
    fn mappings_conserve_work(l in layer_strategy()) {
        let expected = loop_count(&l);
        prop_assert_eq!(l.mac_ops(), expected);
        for p in partitions() {
            let flex = map_layer(&l, &p, None).unwrap();
            prop_assert_eq!(flex.mac_ops, expected);
            prop_assert_eq!(flex.classes.iter().map(|c| c.mac_ops).sum::<u64>(), expected);
            let rigid = map_layer_rigid(&l, &RigidSA::new(p.rows, p.cols), None).unwrap();
            prop_assert_eq!(rigid.mac_ops, expected);
        }
    }
}
