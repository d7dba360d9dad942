//! Layer-shape builders for the benchmark networks.
//!
//! Shapes follow the published architectures at ImageNet resolution
//! (224x224) and the base NLP configurations. Weights are not modeled.
//! Element-wise layers (activations, pooling, normalization, softmax) are
//! emitted as vector layers so their cost is visible in reports.

use super::ModelSpec;
use crate::array::{ConvDims, DwConvDims, GemmDims, LayerOp, LayerSpec, Step, VectorDims};

/// Names accepted by [`builtin`].
pub const BUILTIN_MODELS: [&str; 8] = [
    "alexnet",
    "vgg16",
    "resnet18",
    "mobilenet_v2",
    "efficientnet_b0",
    "convnext_s",
    "transformer",
    "bert",
];

pub const DEFAULT_CNN_BATCH: u32 = 128;
pub const DEFAULT_NLP_BATCH: u32 = 256;
pub const DEFAULT_SEQ_LEN: u32 = 256;

/// Build a benchmark model. `batch` defaults to 128 for CNNs and 256 for
/// the NLP models.
pub fn builtin(name: &str, batch: Option<u32>, seq_len: u32) -> Option<ModelSpec> {
    let cnn = batch.unwrap_or(DEFAULT_CNN_BATCH);
    let nlp = batch.unwrap_or(DEFAULT_NLP_BATCH);
    Some(match name {
        "alexnet" => alexnet(cnn),
        "vgg16" => vgg16(cnn),
        "resnet18" => resnet18(cnn),
        "mobilenet_v2" => mobilenet_v2(cnn),
        "efficientnet_b0" => efficientnet_b0(cnn),
        "convnext_s" => convnext_s(cnn),
        "transformer" => transformer(nlp, seq_len),
        "bert" => bert(nlp, seq_len),
        _ => return None,
    })
}

/// Tracks the activation shape while layers are appended.
struct Net {
    n: u32,
    c: u32,
    h: u32,
    w: u32,
    layers: Vec<LayerSpec>,
}

impl Net {
    fn new(n: u32, c: u32, hw: u32) -> Self {
        Net {
            n,
            c,
            h: hw,
            w: hw,
            layers: vec![],
        }
    }

    fn push(&mut self, name: String, op: LayerOp) {
        self.layers.push(LayerSpec::new(name, op, Step::Inference));
    }

    fn elements(&self) -> u64 {
        self.n as u64 * self.c as u64 * self.h as u64 * self.w as u64
    }

    /// Convolution reading a saved activation, leaving the current shape alone.
    fn conv_from(
        &mut self,
        name: &str,
        (c, h, w): (u32, u32, u32),
        c_out: u32,
        k: u32,
        stride: u32,
        pad: u32,
    ) -> ConvDims {
        let d = ConvDims {
            n: self.n,
            c_in: c,
            c_out,
            h,
            w,
            k,
            stride,
            pad: Some(pad),
        };
        self.push(name.to_string(), LayerOp::Conv(d));
        d
    }

    fn conv(&mut self, name: &str, c_out: u32, k: u32, stride: u32, pad: u32) {
        let d = self.conv_from(name, (self.c, self.h, self.w), c_out, k, stride, pad);
        (self.c, self.h, self.w) = (c_out, d.out_h() as u32, d.out_w() as u32);
    }

    fn dw(&mut self, name: &str, k: u32, stride: u32) {
        let d = DwConvDims {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            k,
            stride,
            pad: Some(k / 2),
        };
        self.push(name.to_string(), LayerOp::Dwconv(d));
        (self.h, self.w) = (d.out_h() as u32, d.out_w() as u32);
    }

    fn vector(&mut self, name: &str, elements: u64) {
        self.push(name.to_string(), LayerOp::Vector(VectorDims { elements }));
    }

    fn act(&mut self, name: &str) {
        self.vector(name, self.elements());
    }

    fn pool(&mut self, name: &str, k: u32, stride: u32, pad: u32) {
        let out = |x: u32| (x + 2 * pad - k) / stride + 1;
        (self.h, self.w) = (out(self.h), out(self.w));
        self.vector(name, self.elements() * (k * k) as u64);
    }

    fn global_pool(&mut self, name: &str) {
        self.vector(name, self.elements());
        (self.h, self.w) = (1, 1);
    }

    fn fc(&mut self, name: &str, out: u32) {
        let d = GemmDims {
            m: self.n,
            k: self.c * self.h * self.w,
            n: out,
        };
        self.push(name.to_string(), LayerOp::Gemm(d));
        (self.c, self.h, self.w) = (out, 1, 1);
    }

    fn finish(self, name: &str) -> ModelSpec {
        ModelSpec {
            name: name.to_string(),
            format: None,
            layers: self.layers,
        }
    }
}

pub fn alexnet(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    net.conv("conv1", 64, 11, 4, 2);
    net.act("relu1");
    net.pool("pool1", 3, 2, 0);
    net.conv("conv2", 192, 5, 1, 2);
    net.act("relu2");
    net.pool("pool2", 3, 2, 0);
    net.conv("conv3", 384, 3, 1, 1);
    net.act("relu3");
    net.conv("conv4", 256, 3, 1, 1);
    net.act("relu4");
    net.conv("conv5", 256, 3, 1, 1);
    net.act("relu5");
    net.pool("pool5", 3, 2, 0);
    net.fc("fc6", 4096);
    net.act("relu6");
    net.fc("fc7", 4096);
    net.act("relu7");
    net.fc("fc8", 1000);
    net.finish("alexnet")
}

pub fn vgg16(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    let stages: [&[u32]; 5] = [
        &[64, 64],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ];
    for (s, widths) in stages.iter().enumerate() {
        for (i, &c) in widths.iter().enumerate() {
            let name = format!("conv{}_{}", s + 1, i + 1);
            net.conv(&name, c, 3, 1, 1);
            net.act(&format!("{name}.relu"));
        }
        net.pool(&format!("pool{}", s + 1), 2, 2, 0);
    }
    net.fc("fc6", 4096);
    net.act("relu6");
    net.fc("fc7", 4096);
    net.act("relu7");
    net.fc("fc8", 1000);
    net.finish("vgg16")
}

pub fn resnet18(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    net.conv("conv1", 64, 7, 2, 3);
    net.act("relu1");
    net.pool("maxpool", 3, 2, 1);
    for (stage, c_out) in [64u32, 128, 256, 512].into_iter().enumerate() {
        for block in 0..2 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let p = format!("layer{}.{}", stage + 1, block);
            let input = (net.c, net.h, net.w);
            net.conv(&format!("{p}.conv1"), c_out, 3, stride, 1);
            net.act(&format!("{p}.relu1"));
            net.conv(&format!("{p}.conv2"), c_out, 3, 1, 1);
            if stride != 1 || input.0 != c_out {
                net.conv_from(&format!("{p}.downsample"), input, c_out, 1, stride, 0);
            }
            net.act(&format!("{p}.add_relu"));
        }
    }
    net.global_pool("avgpool");
    net.fc("fc", 1000);
    net.finish("resnet18")
}

pub fn mobilenet_v2(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    net.conv("conv0", 32, 3, 2, 1);
    net.act("conv0.relu6");
    // (expansion, channels, repeats, first stride)
    let settings = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];
    let mut idx = 1;
    for (t, c, n, s) in settings {
        for i in 0..n {
            let stride = if i == 0 { s } else { 1 };
            let p = format!("block{idx}");
            let c_in = net.c;
            if t != 1 {
                net.conv(&format!("{p}.expand"), c_in * t, 1, 1, 0);
                net.act(&format!("{p}.expand.relu6"));
            }
            net.dw(&format!("{p}.dw"), 3, stride);
            net.act(&format!("{p}.dw.relu6"));
            net.conv(&format!("{p}.project"), c, 1, 1, 0);
            if stride == 1 && c_in == c {
                net.act(&format!("{p}.add"));
            }
            idx += 1;
        }
    }
    net.conv("conv_last", 1280, 1, 1, 0);
    net.act("conv_last.relu6");
    net.global_pool("avgpool");
    net.fc("classifier", 1000);
    net.finish("mobilenet_v2")
}

pub fn efficientnet_b0(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    net.conv("stem", 32, 3, 2, 1);
    net.act("stem.swish");
    // (expansion, kernel, first stride, channels, repeats)
    let settings = [
        (1, 3, 1, 16, 1),
        (6, 3, 2, 24, 2),
        (6, 5, 2, 40, 2),
        (6, 3, 2, 80, 3),
        (6, 5, 1, 112, 3),
        (6, 5, 2, 192, 4),
        (6, 3, 1, 320, 1),
    ];
    let mut idx = 1;
    for (e, k, s, c, n) in settings {
        for i in 0..n {
            let stride = if i == 0 { s } else { 1 };
            let p = format!("mbconv{idx}");
            let c_in = net.c;
            let c_exp = c_in * e;
            if e != 1 {
                net.conv(&format!("{p}.expand"), c_exp, 1, 1, 0);
                net.act(&format!("{p}.expand.swish"));
            }
            net.dw(&format!("{p}.dw"), k, stride);
            net.act(&format!("{p}.dw.swish"));
            // squeeze-and-excitation on the pooled activation
            let se = (c_in / 4).max(1);
            net.vector(&format!("{p}.se.pool"), net.elements());
            net.push(
                format!("{p}.se.reduce"),
                LayerOp::Gemm(GemmDims {
                    m: net.n,
                    k: c_exp,
                    n: se,
                }),
            );
            net.push(
                format!("{p}.se.expand"),
                LayerOp::Gemm(GemmDims {
                    m: net.n,
                    k: se,
                    n: c_exp,
                }),
            );
            net.act(&format!("{p}.se.scale"));
            net.conv(&format!("{p}.project"), c, 1, 1, 0);
            if stride == 1 && c_in == c {
                net.act(&format!("{p}.add"));
            }
            idx += 1;
        }
    }
    net.conv("head", 1280, 1, 1, 0);
    net.act("head.swish");
    net.global_pool("avgpool");
    net.fc("classifier", 1000);
    net.finish("efficientnet_b0")
}

pub fn convnext_s(batch: u32) -> ModelSpec {
    let mut net = Net::new(batch, 3, 224);
    net.conv("stem", 96, 4, 4, 0);
    net.act("stem.norm");
    let depths = [3, 3, 27, 3];
    let dims = [96, 192, 384, 768];
    for (s, (&depth, &dim)) in depths.iter().zip(&dims).enumerate() {
        if s > 0 {
            net.act(&format!("down{s}.norm"));
            net.conv(&format!("down{s}.conv"), dim, 2, 2, 0);
        }
        for b in 0..depth {
            let p = format!("stage{}.{b}", s + 1);
            net.dw(&format!("{p}.dw"), 7, 1);
            net.act(&format!("{p}.norm"));
            net.conv(&format!("{p}.pw1"), 4 * dim, 1, 1, 0);
            net.act(&format!("{p}.gelu"));
            net.conv(&format!("{p}.pw2"), dim, 1, 1, 0);
            net.act(&format!("{p}.scale_add"));
        }
    }
    net.global_pool("avgpool");
    net.act("head.norm");
    net.fc("head", 1000);
    net.finish("convnext_s")
}

struct Encoder {
    batch: u32,
    d: u32,
    heads: u32,
    ff: u32,
    layers: Vec<LayerSpec>,
}

impl Encoder {
    fn gemm(&mut self, name: String, m: u32, k: u32, n: u32, repeat: u32) {
        self.layers.push(
            LayerSpec::new(name, LayerOp::Gemm(GemmDims { m, k, n }), Step::Inference)
                .with_repeat(repeat),
        );
    }

    fn vector(&mut self, name: String, elements: u64) {
        self.layers.push(LayerSpec::new(
            name,
            LayerOp::Vector(VectorDims { elements }),
            Step::Inference,
        ));
    }

    /// Projections over all tokens; scores and context per (sequence, head).
    fn attention(&mut self, p: &str, seq_q: u32, seq_kv: u32) {
        let (b, d, h) = (self.batch, self.d, self.heads);
        let dh = d / h;
        self.gemm(format!("{p}.q"), b * seq_q, d, d, 1);
        self.gemm(format!("{p}.k"), b * seq_kv, d, d, 1);
        self.gemm(format!("{p}.v"), b * seq_kv, d, d, 1);
        self.gemm(format!("{p}.scores"), seq_q, dh, seq_kv, b * h);
        self.vector(
            format!("{p}.softmax"),
            (b * h) as u64 * seq_q as u64 * seq_kv as u64,
        );
        self.gemm(format!("{p}.context"), seq_q, seq_kv, dh, b * h);
        self.gemm(format!("{p}.out"), b * seq_q, d, d, 1);
        self.vector(format!("{p}.add_norm"), (b * seq_q) as u64 * d as u64);
    }

    fn ffn(&mut self, p: &str, seq: u32, act: &str) {
        let (t, d, ff) = (self.batch * seq, self.d, self.ff);
        self.gemm(format!("{p}.ff1"), t, d, ff, 1);
        self.vector(format!("{p}.{act}"), t as u64 * ff as u64);
        self.gemm(format!("{p}.ff2"), t, ff, d, 1);
        self.vector(format!("{p}.add_norm"), t as u64 * d as u64);
    }
}

/// Base encoder-decoder model: 6+6 layers, d = 512, 8 heads, d_ff = 2048,
/// shared 37000-token vocabulary.
pub fn transformer(batch: u32, seq_len: u32) -> ModelSpec {
    let mut e = Encoder {
        batch,
        d: 512,
        heads: 8,
        ff: 2048,
        layers: vec![],
    };
    for l in 0..6 {
        e.attention(&format!("enc{l}.attn"), seq_len, seq_len);
        e.ffn(&format!("enc{l}.ffn"), seq_len, "relu");
    }
    for l in 0..6 {
        e.attention(&format!("dec{l}.self_attn"), seq_len, seq_len);
        e.attention(&format!("dec{l}.cross_attn"), seq_len, seq_len);
        e.ffn(&format!("dec{l}.ffn"), seq_len, "relu");
    }
    let t = batch * seq_len;
    e.gemm("generator".into(), t, 512, 37000, 1);
    e.vector("generator.softmax".into(), t as u64 * 37000);
    ModelSpec {
        name: "transformer".into(),
        format: None,
        layers: e.layers,
    }
}

/// Base encoder: 12 layers, d = 768, 12 heads, d_ff = 3072, span
/// prediction head.
pub fn bert(batch: u32, seq_len: u32) -> ModelSpec {
    let mut e = Encoder {
        batch,
        d: 768,
        heads: 12,
        ff: 3072,
        layers: vec![],
    };
    for l in 0..12 {
        e.attention(&format!("layer{l}.attn"), seq_len, seq_len);
        e.ffn(&format!("layer{l}.ffn"), seq_len, "gelu");
    }
    e.gemm("qa_head".into(), batch * seq_len, 768, 2, 1);
    ModelSpec {
        name: "bert".into(),
        format: None,
        layers: e.layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::LayerOp;

    fn find<'a>(m: &'a ModelSpec, name: &str) -> &'a LayerSpec {
        m.layers
            .iter()
            .find(|l| l.name == name)
            .unwrap_or_else(|| panic!("{name}"))
    }

    #[test]
    fn alexnet_shapes() {
        let m = alexnet(1);
        let LayerOp::Conv(c1) = find(&m, "conv1").op else {
            panic!()
        };
        assert_eq!(c1.out_h(), 55);
        let LayerOp::Gemm(fc6) = find(&m, "fc6").op else {
            panic!()
        };
        assert_eq!((fc6.k, fc6.n), (9216, 4096));
    }

    #[test]
    fn vgg16_has_thirteen_convs() {
        let m = vgg16(1);
        let convs = m
            .layers
            .iter()
            .filter(|l| matches!(l.op, LayerOp::Conv(_)))
            .count();
        assert_eq!(convs, 13);
        let LayerOp::Gemm(fc6) = find(&m, "fc6").op else {
            panic!()
        };
        assert_eq!(fc6.k, 25088);
    }

    #[test]
    fn resnet18_macs() {
        // 1.81 GMACs per 224x224 image
        let macs: u64 = resnet18(1).layers.iter().map(|l| l.mac_ops()).sum();
        assert!((1_800_000_000..1_830_000_000).contains(&macs), "{macs}");
        let m = resnet18(1);
        let LayerOp::Conv(ds) = find(&m, "layer4.0.downsample").op else {
            panic!()
        };
        assert_eq!((ds.c_in, ds.c_out, ds.h, ds.out_h()), (256, 512, 14, 7));
    }

    #[test]
    fn mobilenet_v2_macs() {
        // about 300 MMACs per image
        let macs: u64 = mobilenet_v2(1).layers.iter().map(|l| l.mac_ops()).sum();
        assert!((295_000_000..310_000_000).contains(&macs), "{macs}");
        let dws = mobilenet_v2(1)
            .layers
            .iter()
            .filter(|l| matches!(l.op, LayerOp::Dwconv(_)))
            .count();
        assert_eq!(dws, 17);
    }

    #[test]
    fn efficientnet_b0_macs() {
        // about 390 MMACs per image
        let macs: u64 = efficientnet_b0(1).layers.iter().map(|l| l.mac_ops()).sum();
        assert!((380_000_000..405_000_000).contains(&macs), "{macs}");
    }

    #[test]
    fn convnext_s_macs() {
        // 8.7 GMACs per image
        let macs: u64 = convnext_s(1).layers.iter().map(|l| l.mac_ops()).sum();
        assert!((8_500_000_000..8_900_000_000).contains(&macs), "{macs}");
    }

    #[test]
    fn bert_layer_shapes() {
        let m = bert(2, 256);
        let s = find(&m, "layer0.attn.scores");
        assert_eq!(s.repeat, 24);
        assert_eq!(
            s.op,
            LayerOp::Gemm(GemmDims {
                m: 256,
                k: 64,
                n: 256
            })
        );
        let LayerOp::Gemm(ff1) = find(&m, "layer11.ffn.ff1").op else {
            panic!()
        };
        assert_eq!((ff1.m, ff1.k, ff1.n), (512, 768, 3072));
    }

    #[test]
    fn every_builtin_validates() {
        for name in BUILTIN_MODELS {
            let m = builtin(name, Some(1), 16).unwrap();
            for l in &m.layers {
                l.validate().unwrap();
            }
        }
        assert!(builtin("lenet", None, 16).is_none());
    }
}
