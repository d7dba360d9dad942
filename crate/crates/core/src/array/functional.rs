//! Functional (bit-level) execution of mapped layers.
//!
//! Every MAC unit holds `lanes` consecutive reduction elements. Integer
//! units add their fused multiplier output into a saturating 32-bit
//! accumulator; float units add each lane product into a binary32
//! accumulator in lane order, saturating at the largest finite value. Partial sums always visit the reduction in
//! ascending order, so the result does not depend on how a layer is tiled
//! or which fusion pattern runs it.

use super::{ArrayConfig, LayerOp, LayerSpec, Step};
use crate::error::{Error, Result};
use crate::formats::{
    decode_float, encode_float, DataFormat, Dyadic, ExactValue, FloatFormat, FloatValue,
};
use crate::multiplier::{multiply, MultMode};

/// Row-major tensor of raw words: element bit patterns for operands, and
/// for outputs either `i32` accumulators or output-format bit patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<u32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<u32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn matrix_dims(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "{what} must be 2-D, got {:?}",
                self.shape
            ))),
        }
    }
}

enum Products {
    /// Integer unit outputs indexed by `(a << width) | b` for one lane.
    IntLut {
        lut: Vec<i32>,
        width: u32,
    },
    FloatLut {
        lut: Vec<f32>,
        width: u32,
    },
    /// Formats too wide for a table call the multiplier per product.
    Direct(FloatFormat),
}

/// Float psum update, saturating at the largest finite `f32`. Products
/// beyond the `f32` range (wide-exponent formats) are clamped first.
pub fn accumulate_f32(acc: f32, product: f32) -> f32 {
    (acc + product.clamp(-f32::MAX, f32::MAX)).clamp(-f32::MAX, f32::MAX)
}

/// One MAC unit's arithmetic for a format, table-driven where the operand
/// space is small. Tables are filled by the multiplier model itself.
pub struct MacEngine {
    format: DataFormat,
    lanes: usize,
    products: Products,
}

impl MacEngine {
    pub fn new(format: DataFormat) -> Result<Self> {
        let mode = MultMode::for_format(format);
        let lanes = mode.lanes();
        let products = match format {
            DataFormat::Int(i) => {
                let w = i.width();
                let mut lut = Vec::with_capacity(1 << (2 * w));
                for a in 0..1u64 << w {
                    for b in 0..1u64 << w {
                        let out = multiply(a, b, &mode)?;
                        lut.push(out.int_result().expect("int mode") as i32);
                    }
                }
                Products::IntLut { lut, width: w }
            }
            DataFormat::Float(f) if f.width() <= 8 => {
                let w = f.width();
                let mut lut = Vec::with_capacity(1 << (2 * w));
                for a in 0..1u64 << w {
                    for b in 0..1u64 << w {
                        let p = multiply(a, b, &mode)?.float_lanes()[0];
                        lut.push(decode_float(p).to_f64() as f32);
                    }
                }
                Products::FloatLut { lut, width: w }
            }
            DataFormat::Float(f) => Products::Direct(f),
        };
        Ok(MacEngine {
            format,
            lanes,
            products,
        })
    }

    pub fn format(&self) -> DataFormat {
        self.format
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn is_float(&self) -> bool {
        self.format.is_float()
    }

    /// Accumulate `a[i] * b[i]` into an integer psum, one unit of `lanes`
    /// elements at a time.
    pub fn mac_int(&self, mut acc: i32, a: &[u32], b: &[u32]) -> i32 {
        let Products::IntLut { lut, width } = &self.products else {
            panic!("integer MAC on float engine");
        };
        for (ua, ub) in a.chunks(self.lanes).zip(b.chunks(self.lanes)) {
            let unit: i32 = ua
                .iter()
                .zip(ub)
                .map(|(&x, &y)| lut[((x << width) | y) as usize])
                .sum();
            acc = acc.saturating_add(unit);
        }
        acc
    }

    pub fn mac_float(&self, mut acc: f32, a: &[u32], b: &[u32]) -> f32 {
        match &self.products {
            Products::FloatLut { lut, width } => {
                for (&x, &y) in a.iter().zip(b) {
                    acc = accumulate_f32(acc, lut[((x << width) | y) as usize]);
                }
            }
            Products::Direct(f) => {
                let mode = MultMode::float(*f);
                for (&x, &y) in a.iter().zip(b) {
                    let p = multiply(x as u64, y as u64, &mode).expect("operand in range");
                    acc = accumulate_f32(acc, decode_float(p.float_lanes()[0]).to_f64() as f32);
                }
            }
            Products::IntLut { .. } => panic!("float MAC on integer engine"),
        }
        acc
    }

    /// Output word for a finished float psum.
    pub fn encode_output(&self, acc: f32) -> u32 {
        let DataFormat::Float(f) = self.format else {
            return acc as i32 as u32;
        };
        let d = Dyadic::from_f32(acc).expect("finite accumulator");
        encode_float(ExactValue::from_dyadic(d), f, f.default_bias()).bits()
    }
}

/// Multiply `a[m x k]` by `b[k x n]` on the configured array.
///
/// Output columns are dealt to partitions in chunks of each partition's
/// width; inside a partition the loop runs column folds, then row folds,
/// keeping partial sums between row folds.
pub fn execute_gemm(
    config: &ArrayConfig,
    fmt: DataFormat,
    a: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let engine = MacEngine::new(fmt)?;
    execute_gemm_with(config, &engine, a, b)
}

pub fn execute_gemm_with(
    config: &ArrayConfig,
    engine: &MacEngine,
    a: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let (m, k) = a.matrix_dims("inputs")?;
    let (k2, n) = b.matrix_dims("weights")?;
    if k != k2 {
        return Err(Error::ShapeMismatch(format!(
            "inputs are {m}x{k} but weights are {k2}x{n}"
        )));
    }
    let lanes = engine.lanes();
    // weights transposed so one column's reduction is contiguous
    let mut bt = vec![0u32; k * n];
    for r in 0..k {
        for c in 0..n {
            bt[c * k + r] = b.data[r * n + c];
        }
    }
    let mut psum_i = vec![0i32; if engine.is_float() { 0 } else { m * n }];
    let mut psum_f = vec![0f32; if engine.is_float() { m * n } else { 0 }];

    let mut col = 0;
    let parts = &config.partitions;
    let mut p = 0;
    while col < n {
        let part = &parts[p % parts.len()];
        let chunk = (part.cols as usize).min(n - col);
        let rows_elems = part.rows as usize * lanes;
        for cf in (col..col + chunk).step_by(part.cols as usize) {
            let c_end = (cf + part.cols as usize).min(col + chunk);
            for r0 in (0..k).step_by(rows_elems) {
                let r1 = (r0 + rows_elems).min(k);
                for i in 0..m {
                    let arow = &a.data[i * k + r0..i * k + r1];
                    for c in cf..c_end {
                        let bcol = &bt[c * k + r0..c * k + r1];
                        if engine.is_float() {
                            psum_f[i * n + c] = engine.mac_float(psum_f[i * n + c], arow, bcol);
                        } else {
                            psum_i[i * n + c] = engine.mac_int(psum_i[i * n + c], arow, bcol);
                        }
                    }
                }
            }
        }
        col += chunk;
        p += 1;
    }
    let data = if engine.is_float() {
        psum_f
            .into_iter()
            .map(|x| engine.encode_output(x))
            .collect()
    } else {
        psum_i.into_iter().map(|x| x as u32).collect()
    };
    Tensor::new(vec![m, n], data)
}

/// Brute-force matrix product under the same accumulator policy, built on
/// exact decoding rather than the multiplier.
pub fn gemm_oracle(fmt: DataFormat, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    use crate::formats::decode_int;
    use crate::multiplier::reference_float_product;

    let (m, k) = a.matrix_dims("inputs")?;
    let (_, n) = b.matrix_dims("weights")?;
    let lanes = MultMode::for_format(fmt).lanes();
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            match fmt {
                DataFormat::Int(f) => {
                    let mut acc = 0i32;
                    for u in (0..k).step_by(lanes) {
                        let mut unit = 0i64;
                        for r in u..(u + lanes).min(k) {
                            unit += decode_int(a.data[i * k + r], f)?
                                * decode_int(b.data[r * n + j], f)?;
                        }
                        acc = (acc as i64 + unit).clamp(i32::MIN as i64, i32::MAX as i64) as i32;
                    }
                    out.push(acc as u32);
                }
                DataFormat::Float(f) => {
                    let mut acc = 0f32;
                    for r in 0..k {
                        let x = FloatValue::new(a.data[i * k + r], f)?;
                        let y = FloatValue::new(b.data[r * n + j], f)?;
                        let p = reference_float_product(x, y, f.default_bias())
                            .decode()
                            .to_f64() as f32;
                        acc = accumulate_f32(acc, p);
                    }
                    let d = Dyadic::from_f32(acc).expect("finite");
                    out.push(encode_float(ExactValue::from_dyadic(d), f, f.default_bias()).bits());
                }
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// im2col of an `N x C x H x W` tensor for one group of channels.
fn im2col(
    input: &Tensor,
    (n, c, h, w): (usize, usize, usize, usize),
    channels: std::ops::Range<usize>,
    (k, stride, pad): (usize, usize, usize),
    (oh, ow): (usize, usize),
) -> Tensor {
    let cols = channels.len() * k * k;
    let mut data = vec![0u32; n * oh * ow * cols];
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                let row = (b * oh + y) * ow + x;
                for (ci, ch) in channels.clone().enumerate() {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (x * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                let src = ((b * c + ch) * h + iy as usize) * w + ix as usize;
                                data[row * cols + (ci * k + ky) * k + kx] = input.data[src];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: vec![n * oh * ow, cols],
        data,
    }
}

/// Run a forward layer on the array.
///
/// * `gemm`: `inputs` is `m x k`, `weights` is `k x n`, output `m x n`.
/// * `conv`: `inputs` is `N x C_in x H x W`, `weights` is
///   `C_out x C_in x K x K`, output `N x C_out x OH x OW`.
/// * `dwconv`: `weights` is `C x K x K`, output `N x C x OH x OW`.
pub fn execute_functional(
    config: &ArrayConfig,
    layer: &LayerSpec,
    weights: &Tensor,
    inputs: &Tensor,
) -> Result<Tensor> {
    layer.validate()?;
    if !matches!(layer.step, Step::Fw | Step::Inference) {
        return Err(Error::Unsupported(format!(
            "functional execution of {:?} steps",
            layer.step
        )));
    }
    let fmt = layer.format.ok_or_else(|| Error::Schema {
        field: format!("{}.format", layer.name),
        detail: "functional execution needs a format".into(),
    })?;
    let engine = MacEngine::new(fmt)?;
    let expect = |t: &Tensor, shape: Vec<usize>, what: &str| {
        if t.shape != shape {
            Err(Error::ShapeMismatch(format!(
                "{what} shape {:?}, expected {shape:?}",
                t.shape
            )))
        } else {
            Ok(())
        }
    };
    match layer.op {
        LayerOp::Gemm(d) => {
            expect(inputs, vec![d.m as usize, d.k as usize], "inputs")?;
            expect(weights, vec![d.k as usize, d.n as usize], "weights")?;
            execute_gemm_with(config, &engine, inputs, weights)
        }
        LayerOp::Conv(d) => {
            let (n, ci, co, h, w, k) = (
                d.n as usize,
                d.c_in as usize,
                d.c_out as usize,
                d.h as usize,
                d.w as usize,
                d.k as usize,
            );
            let (oh, ow) = (d.out_h() as usize, d.out_w() as usize);
            expect(inputs, vec![n, ci, h, w], "inputs")?;
            expect(weights, vec![co, ci, k, k], "weights")?;
            let cols = im2col(
                inputs,
                (n, ci, h, w),
                0..ci,
                (k, d.stride as usize, d.pad() as usize),
                (oh, ow),
            );
            // weights as (C_in*K*K) x C_out
            let kk = ci * k * k;
            let mut wm = vec![0u32; kk * co];
            for o in 0..co {
                for r in 0..kk {
                    wm[r * co + o] = weights.data[o * kk + r];
                }
            }
            let wm = Tensor::new(vec![kk, co], wm)?;
            let out = execute_gemm_with(config, &engine, &cols, &wm)?;
            Ok(nhwc_to_nchw(&out, n, co, oh, ow))
        }
        LayerOp::Dwconv(d) => {
            let (n, c, h, w, k) = (
                d.n as usize,
                d.c as usize,
                d.h as usize,
                d.w as usize,
                d.k as usize,
            );
            let (oh, ow) = (d.out_h() as usize, d.out_w() as usize);
            expect(inputs, vec![n, c, h, w], "inputs")?;
            expect(weights, vec![c, k, k], "weights")?;
            let mut out = vec![0u32; n * c * oh * ow];
            for ch in 0..c {
                let cols = im2col(
                    inputs,
                    (n, c, h, w),
                    ch..ch + 1,
                    (k, d.stride as usize, d.pad() as usize),
                    (oh, ow),
                );
                let wm = Tensor::new(
                    vec![k * k, 1],
                    weights.data[ch * k * k..(ch + 1) * k * k].to_vec(),
                )?;
                let o = execute_gemm_with(config, &engine, &cols, &wm)?;
                for b in 0..n {
                    for p in 0..oh * ow {
                        out[(b * c + ch) * oh * ow + p] = o.data[b * oh * ow + p];
                    }
                }
            }
            Tensor::new(vec![n, c, oh, ow], out)
        }
        LayerOp::Vector(_) => Err(Error::Unsupported("vector layers have no MAC work".into())),
    }
}

fn nhwc_to_nchw(t: &Tensor, n: usize, c: usize, oh: usize, ow: usize) -> Tensor {
    let mut data = vec![0u32; n * c * oh * ow];
    for b in 0..n {
        for p in 0..oh * ow {
            for ch in 0..c {
                data[(b * c + ch) * oh * ow + p] = t.data[(b * oh * ow + p) * c + ch];
            }
        }
    }
    Tensor {
        shape: vec![n, c, oh, ow],
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{configure, ConvDims, FusionPattern};
    use crate::formats::encode_int;
    use crate::formats::IntFormat;

    fn cfg(p: FusionPattern, fmt: DataFormat) -> ArrayConfig {
        configure(p, &[MultMode::for_format(fmt)]).unwrap()
    }

    #[test]
    fn small_int8_gemm_matches_matmul() {
        let f = IntFormat::INT8;
        let a: Vec<i64> = vec![1, -2, 3, 4, 5, -6];
        let b: Vec<i64> = vec![7, 8, -9, 10, 11, 12];
        let enc = |v: &[i64]| {
            v.iter()
                .map(|&x| encode_int(x, f).unwrap())
                .collect::<Vec<_>>()
        };
        let at = Tensor::new(vec![2, 3], enc(&a)).unwrap();
        let bt = Tensor::new(vec![3, 2], enc(&b)).unwrap();
        let out = execute_gemm(
            &cfg(FusionPattern::E, DataFormat::INT8),
            DataFormat::INT8,
            &at,
            &bt,
        )
        .unwrap();
        let got: Vec<i32> = out.data.iter().map(|&x| x as i32).collect();
        // [1 -2 3; 4 5 -6] * [7 8; -9 10; 11 12]
        assert_eq!(got, vec![58, 24, -83, 10]);
    }

    #[test]
    fn identity_pointwise_conv() {
        let fmt = DataFormat::FP8A;
        let layer = LayerSpec::new(
            "pw",
            LayerOp::Conv(ConvDims {
                n: 1,
                c_in: 3,
                c_out: 3,
                h: 2,
                w: 2,
                k: 1,
                stride: 1,
                pad: None,
            }),
            Step::Fw,
        )
        .with_format(fmt);
        let one = 0x38;
        let mut w = vec![0u32; 9];
        for i in 0..3 {
            w[i * 3 + i] = one;
        }
        let inputs: Vec<u32> = (0..12).map(|i| 0x30 + i).collect();
        let out = execute_functional(
            &cfg(FusionPattern::H, fmt),
            &layer,
            &Tensor::new(vec![3, 3, 1, 1], w).unwrap(),
            &Tensor::new(vec![1, 3, 2, 2], inputs.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data, inputs);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        assert!(execute_gemm(
            &cfg(FusionPattern::E, DataFormat::INT8),
            DataFormat::INT8,
            &a,
            &b
        )
        .is_err());
        assert!(Tensor::new(vec![2, 2], vec![0; 3]).is_err());
    }

    #[test]
    fn saturating_accumulator() {
        let f = IntFormat::INT8;
        let k = 200_000;
        let a = Tensor::new(vec![1, k], vec![encode_int(-128, f).unwrap(); k]).unwrap();
        let b = Tensor::new(vec![k, 1], vec![encode_int(-128, f).unwrap(); k]).unwrap();
        let out = execute_gemm(
            &cfg(FusionPattern::E, DataFormat::INT8),
            DataFormat::INT8,
            &a,
            &b,
        )
        .unwrap();
        assert_eq!(out.data[0] as i32, i32::MAX);
        assert_eq!(gemm_oracle(DataFormat::INT8, &a, &b).unwrap(), out);
    }

    #[test]
    fn float_accumulator_saturates() {
        let f = FloatFormat::BF16;
        let big = f.max_finite_bits();
        let a = Tensor::new(vec![1, 4], vec![big; 4]).unwrap();
        let b = Tensor::new(vec![4, 1], vec![0x3f80; 4]).unwrap();
        let out = execute_gemm(
            &cfg(FusionPattern::E, DataFormat::BF16),
            DataFormat::BF16,
            &a,
            &b,
        )
        .unwrap();
        // f32::MAX rounds to 2^128 at seven mantissa bits
        assert_eq!(out.data[0], 0x7f80);
        assert!(big > 0x7f80);
        assert_eq!(gemm_oracle(DataFormat::BF16, &a, &b).unwrap(), out);
    }
}
