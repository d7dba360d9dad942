//! Layer descriptions and their lowering to array workloads.
//!
//! JSON form: `{"name", "op": "conv"|"dwconv"|"gemm"|"vector", "step":
//! "fw"|"bw"|"wg"|"inference", "dims": {...}, "format"}`. `format` may be
//! omitted when the enclosing scenario supplies one.

use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::error::{Error, Result};
use crate::formats::DataFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Fw,
    Bw,
    Wg,
    Inference,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvDims {
    pub n: u32,
    pub c_in: u32,
    pub c_out: u32,
    pub h: u32,
    pub w: u32,
    pub k: u32,
    #[serde(default = "one")]
    pub stride: u32,
    /// Zero padding per side; `None` means `k / 2` (SAME for odd kernels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwConvDims {
    pub n: u32,
    pub c: u32,
    pub h: u32,
    pub w: u32,
    pub k: u32,
    #[serde(default = "one")]
    pub stride: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<u32>,
}

/// `C[m x n] = A[m x k] * B[k x n]`; `B` is the stationary operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub m: u32,
    pub k: u32,
    pub n: u32,
}

/// Element-wise work for the vector unit (softmax, normalization, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorDims {
    pub elements: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "dims", rename_all = "lowercase")]
pub enum LayerOp {
    Conv(ConvDims),
    Dwconv(DwConvDims),
    Gemm(GemmDims),
    Vector(VectorDims),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub op: LayerOp,
    #[serde(default = "default_step")]
    pub step: Step,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    /// Independent identical instances, such as per-head attention GEMMs.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub repeat: u32,
}

fn is_one(x: &u32) -> bool {
    *x == 1
}

fn default_step() -> Step {
    Step::Inference
}

/// What the array actually computes for a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    /// `m` streamed vectors against a stationary `k x n` operand; the
    /// reduction runs along `k`.
    Accumulable {
        m: u64,
        k: u64,
        n: u64,
    },
    /// `groups` independent stationary vectors of `reduction` taps, each
    /// meeting a stream of `stream` inputs. `window` is how many taps one
    /// output of the original loop nest consumes at once.
    Unaccumulable {
        groups: u64,
        reduction: u64,
        stream: u64,
        window: u64,
    },
    Vector {
        elements: u64,
    },
}

impl Workload {
    pub fn mac_ops(&self) -> u64 {
        match *self {
            Workload::Accumulable { m, k, n } => m * k * n,
            Workload::Unaccumulable {
                groups,
                reduction,
                stream,
                ..
            } => groups * reduction * stream,
            Workload::Vector { .. } => 0,
        }
    }

    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            Workload::Accumulable { .. } => Some(Scheme::Accumulable),
            Workload::Unaccumulable { .. } => Some(Scheme::Unaccumulable),
            Workload::Vector { .. } => None,
        }
    }
}

fn out_dim(x: u32, k: u32, stride: u32, pad: u32) -> u64 {
    let padded = (x + 2 * pad) as i64 - k as i64;
    if padded < 0 {
        0
    } else {
        (padded / stride as i64 + 1) as u64
    }
}

impl ConvDims {
    pub fn pad(&self) -> u32 {
        self.pad.unwrap_or(self.k / 2)
    }

    pub fn out_h(&self) -> u64 {
        out_dim(self.h, self.k, self.stride, self.pad())
    }

    pub fn out_w(&self) -> u64 {
        out_dim(self.w, self.k, self.stride, self.pad())
    }
}

impl DwConvDims {
    pub fn pad(&self) -> u32 {
        self.pad.unwrap_or(self.k / 2)
    }

    pub fn out_h(&self) -> u64 {
        out_dim(self.h, self.k, self.stride, self.pad())
    }

    pub fn out_w(&self) -> u64 {
        out_dim(self.w, self.k, self.stride, self.pad())
    }
}

fn schema(field: &str, detail: &str) -> Error {
    Error::Schema {
        field: field.to_string(),
        detail: detail.to_string(),
    }
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, op: LayerOp, step: Step) -> Self {
        LayerSpec {
            name: name.into(),
            op,
            step,
            format: None,
            repeat: 1,
        }
    }

    pub fn with_format(mut self, fmt: DataFormat) -> Self {
        self.format = Some(fmt);
        self
    }

    pub fn with_repeat(mut self, repeat: u32) -> Self {
        self.repeat = repeat;
        self
    }

    pub fn gemm(name: impl Into<String>, m: u32, k: u32, n: u32) -> Self {
        Self::new(name, LayerOp::Gemm(GemmDims { m, k, n }), Step::Inference)
    }

    /// Every dimension must be positive and produce a non-empty output.
    pub fn validate(&self) -> Result<()> {
        let pos = |v: u64, f: &str| {
            if v == 0 {
                Err(schema(&format!("{}.dims.{f}", self.name), "must be > 0"))
            } else {
                Ok(())
            }
        };
        if self.repeat == 0 {
            return Err(schema(&format!("{}.repeat", self.name), "must be > 0"));
        }
        match &self.op {
            LayerOp::Conv(d) => {
                for (v, f) in [
                    (d.n, "n"),
                    (d.c_in, "c_in"),
                    (d.c_out, "c_out"),
                    (d.h, "h"),
                    (d.w, "w"),
                    (d.k, "k"),
                    (d.stride, "stride"),
                ] {
                    pos(v as u64, f)?;
                }
                pos(d.out_h() * d.out_w(), "h")?;
            }
            LayerOp::Dwconv(d) => {
                for (v, f) in [
                    (d.n, "n"),
                    (d.c, "c"),
                    (d.h, "h"),
                    (d.w, "w"),
                    (d.k, "k"),
                    (d.stride, "stride"),
                ] {
                    pos(v as u64, f)?;
                }
                pos(d.out_h() * d.out_w(), "h")?;
            }
            LayerOp::Gemm(d) => {
                for (v, f) in [(d.m, "m"), (d.k, "k"), (d.n, "n")] {
                    pos(v as u64, f)?;
                }
            }
            LayerOp::Vector(d) => pos(d.elements, "elements")?,
        }
        Ok(())
    }

    /// Lower the layer to what the array executes.
    ///
    /// Convolutions go through im2col. The backward step of a convolution is
    /// a transposed convolution already carrying swapped channel counts, so
    /// it streams the input-sized gradient. Weight-gradient steps and every
    /// depthwise step reduce over something other than input channels.
    pub fn workload(&self) -> Workload {
        let u = |x: u32| x as u64;
        match (&self.op, self.step) {
            (LayerOp::Vector(d), _) => Workload::Vector {
                elements: d.elements,
            },
            (LayerOp::Conv(d), Step::Fw | Step::Inference) => Workload::Accumulable {
                m: u(d.n) * d.out_h() * d.out_w(),
                k: u(d.c_in) * u(d.k) * u(d.k),
                n: u(d.c_out),
            },
            (LayerOp::Conv(d), Step::Bw) => Workload::Accumulable {
                m: u(d.n) * u(d.h) * u(d.w),
                k: u(d.c_in) * u(d.k) * u(d.k),
                n: u(d.c_out),
            },
            (LayerOp::Conv(d), Step::Wg) => Workload::Unaccumulable {
                groups: u(d.c_out),
                reduction: u(d.n) * d.out_h() * d.out_w(),
                stream: u(d.c_in) * u(d.k) * u(d.k),
                window: u(d.k) * u(d.k),
            },
            (LayerOp::Dwconv(d), Step::Fw | Step::Inference) => Workload::Unaccumulable {
                groups: u(d.c),
                reduction: u(d.k) * u(d.k),
                stream: u(d.n) * d.out_h() * d.out_w(),
                window: u(d.k) * u(d.k),
            },
            (LayerOp::Dwconv(d), Step::Bw) => Workload::Unaccumulable {
                groups: u(d.c),
                reduction: u(d.k) * u(d.k),
                stream: u(d.n) * u(d.h) * u(d.w),
                window: u(d.k) * u(d.k),
            },
            (LayerOp::Dwconv(d), Step::Wg) => Workload::Unaccumulable {
                groups: u(d.c),
                reduction: u(d.n) * d.out_h() * d.out_w(),
                stream: u(d.k) * u(d.k),
                window: u(d.k) * u(d.k),
            },
            (LayerOp::Gemm(d), Step::Wg) => Workload::Unaccumulable {
                groups: u(d.n),
                reduction: u(d.k),
                stream: u(d.m),
                window: 1,
            },
            (LayerOp::Gemm(d), _) => Workload::Accumulable {
                m: u(d.m),
                k: u(d.k),
                n: u(d.n),
            },
        }
    }

    pub fn scheme(&self) -> Option<Scheme> {
        self.workload().scheme()
    }

    /// MACs of one instance; multiply by `repeat` for the whole layer.
    pub fn mac_ops(&self) -> u64 {
        self.workload().mac_ops()
    }

    /// Operand and result sizes in elements: `(stationary, streamed, output)`.
    pub fn tensor_elements(&self) -> (u64, u64, u64) {
        let u = |x: u32| x as u64;
        match (&self.op, self.step) {
            (LayerOp::Vector(d), _) => (0, d.elements, d.elements),
            (LayerOp::Conv(d), Step::Wg) => {
                let (i, o) = (
                    u(d.n) * u(d.c_in) * u(d.h) * u(d.w),
                    u(d.n) * u(d.c_out) * d.out_h() * d.out_w(),
                );
                (o, i, u(d.c_out) * u(d.c_in) * u(d.k) * u(d.k))
            }
            (LayerOp::Conv(d), Step::Bw) => {
                // gradient of the forward output in, input-sized gradient out
                let g = u(d.n) * u(d.c_in) * d.out_h() * d.out_w();
                let w = u(d.c_out) * u(d.c_in) * u(d.k) * u(d.k);
                (w, g, u(d.n) * u(d.c_out) * u(d.h) * u(d.w))
            }
            (LayerOp::Conv(d), _) => (
                u(d.c_out) * u(d.c_in) * u(d.k) * u(d.k),
                u(d.n) * u(d.c_in) * u(d.h) * u(d.w),
                u(d.n) * u(d.c_out) * d.out_h() * d.out_w(),
            ),
            (LayerOp::Dwconv(d), step) => {
                let i = u(d.n) * u(d.c) * u(d.h) * u(d.w);
                let o = u(d.n) * u(d.c) * d.out_h() * d.out_w();
                let w = u(d.c) * u(d.k) * u(d.k);
                match step {
                    Step::Wg => (o, i, w),
                    Step::Bw => (w, o, i),
                    _ => (w, i, o),
                }
            }
            (LayerOp::Gemm(d), _) => (u(d.k) * u(d.n), u(d.m) * u(d.k), u(d.m) * u(d.n)),
        }
    }
}
