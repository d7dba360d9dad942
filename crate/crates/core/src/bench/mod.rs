//! Benchmark workloads and the flexible-versus-rigid comparison harness.
//!
//! A [`Scenario`] names up to four tenants, each running one or more models
//! back to back, and optionally further stages that start once the previous
//! stage has finished, each with its own fusion pattern. [`run_scenario`]
//! maps every layer onto the tenant's partition of the flexible array,
//! [`run_rigid`] runs the same layers one tenant after another on a rigid
//! array, and [`compare`] relates the two reports layer by layer.
//!
//! ```
//! use flexmac::bench::{compare, run_rigid, run_scenario, Scenario};
//!
//! let s = Scenario::from_json(r#"{
//!     "name": "dw",
//!     "pattern": "h",
//!     "format": "int8",
//!     "tenants": [{"name": "t", "models": [{"name": "m", "layers": [
//!         {"name": "dw", "op": "dwconv", "dims": {"n": 1, "c": 64, "h": 56, "w": 56, "k": 3}}
//!     ]}]}]
//! }"#).unwrap();
//! let flex = run_scenario(&s).unwrap();
//! let rigid = run_rigid(&s).unwrap();
//! let cmp = compare(&flex, &rigid).unwrap();
//! assert!(cmp.speedup > 1.0);
//! ```

mod models;

pub use models::{
    alexnet, bert, builtin, convnext_s, efficientnet_b0, mobilenet_v2, resnet18, transformer,
    vgg16, BUILTIN_MODELS, DEFAULT_CNN_BATCH, DEFAULT_NLP_BATCH, DEFAULT_SEQ_LEN,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::array::{
    configure, map_layer, map_layer_rigid, partition_tenants, utilization, ArrayConfig,
    FusionPattern, LayerOp, LayerSpec, Partition, RigidSA, Step, Workload,
};
use crate::error::{Error, Result};
use crate::formats::DataFormat;
use crate::multiplier::MultMode;
use crate::timing::{
    energy, layer_cycles, traffic, vector_traffic, EnergyTable, LayerReport, MemoryConfig,
    RunReport, TenantSummary, VectorUnit,
};

/// Parse JSON, reporting the path of the offending field on failure.
fn parse_json<T: DeserializeOwned>(s: &str, root: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            field: if path == "." { root.to_string() } else { path },
            detail: e.into_inner().to_string(),
        }
    })
}

/// An ordered list of layers, as stored in a model file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelSpec = parse_json(s, "model")?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Schema {
                field: format!("{}.layers", self.name),
                detail: "model has no layers".into(),
            });
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn mac_ops(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.mac_ops() * l.repeat as u64)
            .sum()
    }
}

/// The training-step form of one declared layer.
///
/// * FW: the layer as declared.
/// * BW: convolutions become transposed convolutions with `c_in` and
///   `c_out` swapped; a GEMM `M x K x N` becomes `M x N x K`.
/// * WG: the same dimensions tagged as weight gradient; a GEMM
///   `M x K x N` is stored as `K x M x N` (reduction over `M`).
///
/// Vector layers have FW and BW forms and no WG form.
pub fn expand_training(layer: &LayerSpec, step: Step) -> Result<Option<LayerSpec>> {
    if !matches!(layer.step, Step::Inference | Step::Fw) {
        return Err(Error::Unsupported(format!(
            "layer `{}` is already a {:?} step",
            layer.name, layer.step
        )));
    }
    let op = match (layer.op, step) {
        (_, Step::Inference) => {
            return Err(Error::Unsupported(
                "inference is not a training step".into(),
            ))
        }
        (op, Step::Fw) => op,
        (LayerOp::Vector(_), Step::Wg) => return Ok(None),
        (op @ LayerOp::Vector(_), Step::Bw) => op,
        (LayerOp::Conv(d), Step::Bw) => LayerOp::Conv(crate::array::ConvDims {
            c_in: d.c_out,
            c_out: d.c_in,
            ..d
        }),
        (op @ (LayerOp::Conv(_) | LayerOp::Dwconv(_)), _) => op,
        (LayerOp::Gemm(d), Step::Bw) => LayerOp::Gemm(crate::array::GemmDims {
            m: d.m,
            k: d.n,
            n: d.k,
        }),
        (LayerOp::Gemm(d), Step::Wg) => LayerOp::Gemm(crate::array::GemmDims {
            m: d.k,
            k: d.m,
            n: d.n,
        }),
    };
    let tag = match step {
        Step::Fw => "fw",
        Step::Bw => "bw",
        _ => "wg",
    };
    Ok(Some(LayerSpec {
        name: format!("{}.{tag}", layer.name),
        op,
        step,
        ..layer.clone()
    }))
}

/// One training iteration: every forward layer, then backward and weight
/// gradient in reverse layer order. The first MAC layer has no input
/// gradient to compute.
pub fn training_iteration(layers: &[LayerSpec]) -> Result<Vec<LayerSpec>> {
    let first_mac = layers
        .iter()
        .position(|l| !matches!(l.op, LayerOp::Vector(_)));
    let mut out = vec![];
    for l in layers {
        out.extend(expand_training(l, Step::Fw)?);
    }
    for (i, l) in layers.iter().enumerate().rev() {
        if first_mac.is_none_or(|f| i > f) {
            out.extend(expand_training(l, Step::Bw)?);
        }
        out.extend(expand_training(l, Step::Wg)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Inference,
    Training,
}

/// A model by builtin name, by path to a model file (ending in `.json`,
/// relative to the scenario file), or inline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Named(String),
    Inline(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantSpec {
    pub name: String,
    /// Run back to back on the tenant's partition.
    pub models: Vec<ModelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
}

fn default_seq_len() -> u32 {
    DEFAULT_SEQ_LEN
}

fn default_rigid() -> RigidSA {
    RigidSA::new(128, 128)
}

/// A later phase of a scenario, run on a reconfigured array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub pattern: FusionPattern,
    pub tenants: Vec<TenantSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub pattern: FusionPattern,
    /// Format of every layer that names none itself.
    pub format: DataFormat,
    #[serde(default)]
    pub mode: Mode,
    /// Batch size for builtin models; `None` uses their defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u32>,
    #[serde(default = "default_seq_len")]
    pub seq_len: u32,
    pub tenants: Vec<TenantSpec>,
    /// Stages run after the first one, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub then: Vec<Stage>,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub energy: EnergyTable,
    #[serde(default)]
    pub vector_unit: VectorUnit,
    /// Size of the rigid baseline array.
    #[serde(default = "default_rigid")]
    pub rigid: RigidSA,
    /// Directory that relative model paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// A tenant with its models resolved and expanded to a flat layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct Tenant {
    pub name: String,
    /// Layer names are prefixed with their model name; formats are filled.
    pub layers: Vec<LayerSpec>,
}

impl Tenant {
    pub fn mac_ops(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.mac_ops() * l.repeat as u64)
            .sum()
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = parse_json(s, "scenario")?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut sc = Self::from_json(&std::fs::read_to_string(path)?)?;
        sc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |field: String, detail: &str| Error::Schema {
            field,
            detail: detail.into(),
        };
        let first = Stage {
            pattern: self.pattern,
            tenants: self.tenants.clone(),
        };
        for (k, st) in std::iter::once(&first).chain(&self.then).enumerate() {
            let prefix = if k == 0 {
                String::new()
            } else {
                format!("then[{}].", k - 1)
            };
            if st.tenants.is_empty() {
                return Err(schema(
                    format!("{prefix}tenants"),
                    "at least one tenant is required",
                ));
            }
            if st.tenants.len() > st.pattern.partition_count() {
                return Err(Error::TooManyTenants {
                    tenants: st.tenants.len(),
                    partitions: st.pattern.partition_count(),
                });
            }
            for (i, t) in st.tenants.iter().enumerate() {
                if t.models.is_empty() {
                    return Err(schema(
                        format!("{prefix}tenants[{i}].models"),
                        "at least one model is required",
                    ));
                }
            }
        }
        if self.batch == Some(0) || self.seq_len == 0 {
            return Err(schema("batch".into(), "batch and seq_len must be > 0"));
        }
        if self.rigid.rows == 0 || self.rigid.cols == 0 {
            return Err(schema("rigid".into(), "rows and cols must be > 0"));
        }
        if self.memory.dram_bandwidth <= 0.0 || self.memory.spm_bytes == 0 {
            return Err(schema(
                "memory".into(),
                "bandwidth and SPM size must be > 0",
            ));
        }
        Ok(())
    }

    fn model(&self, r: &ModelRef) -> Result<ModelSpec> {
        match r {
            ModelRef::Inline(m) => {
                m.validate()?;
                Ok(m.clone())
            }
            ModelRef::Named(name) if name.ends_with(".json") => {
                let path = match &self.base_dir {
                    Some(dir) => dir.join(name),
                    None => PathBuf::from(name),
                };
                ModelSpec::from_json(&std::fs::read_to_string(&path)?)
            }
            ModelRef::Named(name) => {
                builtin(name, self.batch, self.seq_len).ok_or_else(|| Error::Schema {
                    field: "tenants.models".into(),
                    detail: format!(
                        "unknown model `{name}` (builtin models: {})",
                        BUILTIN_MODELS.join(", ")
                    ),
                })
            }
        }
    }

    fn resolve(&self, t: &TenantSpec) -> Result<Tenant> {
        let mut layers = vec![];
        for r in &t.models {
            let m = self.model(r)?;
            let fmt = t.format.or(m.format).unwrap_or(self.format);
            let model_layers = match self.mode {
                Mode::Inference => m.layers.clone(),
                Mode::Training => training_iteration(&m.layers)?,
            };
            for l in model_layers {
                layers.push(LayerSpec {
                    name: format!("{}/{}", m.name, l.name),
                    format: Some(l.format.unwrap_or(fmt)),
                    ..l
                });
            }
        }
        Ok(Tenant {
            name: t.name.clone(),
            layers,
        })
    }

    /// Each stage's pattern with its tenants resolved, first stage first.
    pub fn stages(&self) -> Result<Vec<(FusionPattern, Vec<Tenant>)>> {
        let mut out = vec![(
            self.pattern,
            self.tenants
                .iter()
                .map(|t| self.resolve(t))
                .collect::<Result<_>>()?,
        )];
        for st in &self.then {
            out.push((
                st.pattern,
                st.tenants
                    .iter()
                    .map(|t| self.resolve(t))
                    .collect::<Result<_>>()?,
            ));
        }
        Ok(out)
    }

    /// Every tenant of every stage, resolved to layers, in stage order.
    pub fn tenants(&self) -> Result<Vec<Tenant>> {
        Ok(self.stages()?.into_iter().flat_map(|(_, t)| t).collect())
    }
}

/// Memory resources of a partition running alongside others: SPM and DRAM
/// bandwidth in proportion to its MAC units out of the `active` units of
/// all partitions running in the same stage.
pub fn memory_share(mem: &MemoryConfig, units: u64, active: u64) -> MemoryConfig {
    let frac = units as f64 / active as f64;
    MemoryConfig {
        spm_bytes: (mem.spm_bytes as f64 * frac) as u64,
        double_buffered: mem.double_buffered,
        dram_bandwidth: mem.dram_bandwidth * frac,
    }
}

/// Partition assignment of one stage and the MAC units it occupies.
fn plan_stage(
    s: &Scenario,
    pattern: FusionPattern,
    tenants: &[Tenant],
) -> Result<(ArrayConfig, Vec<usize>, u64)> {
    let config = configure(pattern, &[MultMode::for_format(s.format)])?;
    let demands: Vec<u64> = tenants.iter().map(Tenant::mac_ops).collect();
    let assignment = partition_tenants(&config, &demands)?;
    let active = assignment
        .iter()
        .map(|&p| config.partitions[p].units())
        .sum();
    Ok((config, assignment, active))
}

#[derive(Clone, Copy)]
enum Target<'a> {
    Flexible(&'a Partition),
    Rigid(&'a RigidSA),
}

fn op_name(op: &LayerOp) -> &'static str {
    match op {
        LayerOp::Conv(_) => "conv",
        LayerOp::Dwconv(_) => "dwconv",
        LayerOp::Gemm(_) => "gemm",
        LayerOp::Vector(_) => "vector",
    }
}

fn step_name(step: Step) -> &'static str {
    match step {
        Step::Fw => "fw",
        Step::Bw => "bw",
        Step::Wg => "wg",
        Step::Inference => "inference",
    }
}

fn time_layer(
    tenant: &str,
    partition: usize,
    layer: &LayerSpec,
    target: Target,
    s: &Scenario,
    mem: &MemoryConfig,
) -> Result<LayerReport> {
    let fmt = layer.format.unwrap_or(s.format);
    let rep = layer.repeat as u64;
    let base = LayerReport {
        tenant: tenant.to_string(),
        partition,
        layer: layer.name.clone(),
        op: op_name(&layer.op).into(),
        step: step_name(layer.step).into(),
        scheme: "vector".into(),
        format: fmt.to_string(),
        folds: 0,
        cycles: 0,
        compute_cycles: 0,
        stall_cycles: 0,
        utilization: None,
        mac_ops: 0,
        spm_bytes: 0,
        dram_bytes: 0,
        energy: 0.0,
        lane_cycles: 0.0,
    };
    if let Workload::Vector { elements } = layer.workload() {
        let cycles = s.vector_unit.cycles(elements) * rep;
        let t = vector_traffic(elements, fmt);
        let e = elements as f64 * s.energy.vector_per_element
            + t.spm_bytes as f64 * s.energy.spm_per_byte;
        return Ok(LayerReport {
            cycles,
            compute_cycles: cycles,
            spm_bytes: t.spm_bytes * rep,
            energy: e * rep as f64,
            ..base
        });
    }
    let layer = LayerSpec {
        format: Some(fmt),
        ..layer.clone()
    };
    let (mapping, flexible) = match target {
        Target::Flexible(p) => (map_layer(&layer, p, None)?, true),
        Target::Rigid(sa) => (map_layer_rigid(&layer, sa, None)?, false),
    };
    let t = traffic(&layer, &mapping, fmt, mem);
    let lt = layer_cycles(&mapping, t.dram_bytes, mem);
    let e = energy(
        mapping.mac_ops,
        fmt,
        t.spm_bytes,
        t.dram_bytes,
        &s.energy,
        flexible,
    )?;
    let capacity = (mapping.units() * mapping.lanes as u64) as f64;
    let lane_cycles: f64 = mapping
        .classes
        .iter()
        .map(|c| (c.count * c.stream) as f64 * capacity)
        .sum();
    Ok(LayerReport {
        scheme: mapping.scheme.to_string(),
        folds: mapping.folds * rep,
        cycles: lt.cycles * rep,
        compute_cycles: lt.compute_cycles * rep,
        stall_cycles: lt.stall_cycles * rep,
        utilization: Some(utilization(&mapping)),
        mac_ops: mapping.mac_ops * rep,
        spm_bytes: t.spm_bytes * rep,
        dram_bytes: t.dram_bytes * rep,
        energy: e.total * rep as f64,
        lane_cycles: lane_cycles * rep as f64,
        ..base
    })
}

fn run_tenant(
    tenant: &Tenant,
    partition: usize,
    target: Target,
    s: &Scenario,
    mem: &MemoryConfig,
    out: &mut Vec<LayerReport>,
) -> Result<(u64, Option<f64>)> {
    let start = out.len();
    for l in &tenant.layers {
        out.push(time_layer(&tenant.name, partition, l, target, s, mem)?);
    }
    let mine = &out[start..];
    let cycles = mine.iter().map(|l| l.cycles).sum();
    Ok((cycles, crate::timing::Totals::of(mine).utilization))
}

/// Co-schedule the tenants on the partitions of the scenario's pattern.
///
/// Tenants are assigned greedily (largest MAC demand to largest
/// partition); the tenants of a stage split SPM and DRAM bandwidth in
/// proportion to their partition sizes. A stage ends when its slowest tenant does and
/// the next stage starts then. Tenant cycles are completion times and the
/// makespan is the end of the last stage.
pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    s.validate()?;
    let mut layers = vec![];
    let mut summaries = vec![];
    let mut clock = 0;
    let stages = s.stages()?;
    for (k, (pattern, tenants)) in stages.iter().enumerate() {
        let (config, assignment, active) = plan_stage(s, *pattern, tenants)?;
        let mut end = clock;
        for (t, &p) in tenants.iter().zip(&assignment) {
            let part = &config.partitions[p];
            let mem = memory_share(&s.memory, part.units(), active);
            let (cycles, util) = run_tenant(t, p, Target::Flexible(part), s, &mem, &mut layers)?;
            end = end.max(clock + cycles);
            summaries.push(TenantSummary {
                name: t.name.clone(),
                stage: k,
                partition: p,
                rows: part.rows,
                cols: part.cols,
                cycles: clock + cycles,
                utilization: util,
            });
        }
        clock = end;
    }
    let patterns: Vec<String> = stages.iter().map(|(p, _)| p.to_string()).collect();
    Ok(RunReport::new(
        &s.name,
        "flexible",
        patterns.join("+"),
        s.memory,
        summaries,
        layers,
    ))
}

fn run_serial(s: &Scenario, target: Target, array: &str, pattern: &str) -> Result<RunReport> {
    s.validate()?;
    let tenants = s.tenants()?;
    let mut layers = vec![];
    let mut summaries = vec![];
    let mut clock = 0;
    let (rows, cols) = match target {
        Target::Flexible(p) => (p.rows, p.cols),
        Target::Rigid(sa) => (sa.rows, sa.cols),
    };
    for t in &tenants {
        let (cycles, util) = run_tenant(t, 0, target, s, &s.memory, &mut layers)?;
        clock += cycles;
        summaries.push(TenantSummary {
            name: t.name.clone(),
            stage: 0,
            partition: 0,
            rows,
            cols,
            cycles: clock,
            utilization: util,
        });
    }
    Ok(RunReport::new(
        &s.name, array, pattern, s.memory, summaries, layers,
    ))
}

/// Run the tenants of every stage one after another on the fully fused
/// 128x128 array.
pub fn run_serialized(s: &Scenario) -> Result<RunReport> {
    let part = FusionPattern::H.partitions().remove(0);
    run_serial(s, Target::Flexible(&part), "flexible", "h")
}

/// Run the tenants one after another on the scenario's rigid array
/// (128x128 unless set), which cannot host more than one workload at a
/// time.
pub fn run_rigid(s: &Scenario) -> Result<RunReport> {
    let sa = s.rigid;
    run_serial(
        s,
        Target::Rigid(&sa),
        "rigid",
        &format!("rigid-{}x{}", sa.rows, sa.cols),
    )
}

/// Run one tenant alone on a standalone partition of the given size, with
/// the same memory share it would get inside its stage. Tenants are
/// indexed across all stages, in stage order.
pub fn run_standalone(s: &Scenario, tenant: usize, rows: u32, cols: u32) -> Result<RunReport> {
    s.validate()?;
    let mut index = tenant;
    let mut found = None;
    for (stage, (pattern, tenants)) in s.stages()?.into_iter().enumerate() {
        if index < tenants.len() {
            let (_, _, active) = plan_stage(s, pattern, &tenants)?;
            found = Some((tenants[index].clone(), stage, active));
            break;
        }
        index -= tenants.len();
    }
    let (t, stage, active) = found.ok_or_else(|| Error::Schema {
        field: format!("tenants[{tenant}]"),
        detail: "no such tenant".into(),
    })?;
    let part = Partition::standalone(rows, cols)?;
    let mem = memory_share(&s.memory, part.units(), active);
    let mut layers = vec![];
    let (cycles, util) = run_tenant(&t, 0, Target::Flexible(&part), s, &mem, &mut layers)?;
    let summary = TenantSummary {
        name: t.name.clone(),
        stage,
        partition: 0,
        rows,
        cols,
        cycles,
        utilization: util,
    };
    Ok(RunReport::new(
        &s.name,
        "flexible",
        format!("standalone-{rows}x{cols}"),
        mem,
        vec![summary],
        layers,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    pub tenant: String,
    pub layer: String,
    pub step: String,
    pub scheme: String,
    pub flexible_cycles: u64,
    pub rigid_cycles: u64,
    /// Rigid cycles over flexible cycles.
    pub speedup: f64,
    pub flexible_utilization: Option<f64>,
    pub rigid_utilization: Option<f64>,
    pub utilization_delta: Option<f64>,
    /// Rigid energy over flexible energy.
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub flexible_makespan: u64,
    pub rigid_makespan: u64,
    /// Rigid makespan over flexible makespan.
    pub speedup: f64,
    pub flexible_utilization: Option<f64>,
    pub rigid_utilization: Option<f64>,
    pub utilization_delta: Option<f64>,
    pub energy_ratio: f64,
    pub layers: Vec<LayerComparison>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Per-layer and aggregate speedup, utilization delta and energy ratio.
/// Both reports must list the same layers in the same order.
pub fn compare(flexible: &RunReport, rigid: &RunReport) -> Result<ComparisonReport> {
    if flexible.layers.len() != rigid.layers.len() {
        return Err(Error::ReportMismatch(format!(
            "{} layers vs {} layers",
            flexible.layers.len(),
            rigid.layers.len()
        )));
    }
    let mut layers = vec![];
    for (f, r) in flexible.layers.iter().zip(&rigid.layers) {
        if (&f.tenant, &f.layer, &f.step) != (&r.tenant, &r.layer, &r.step) {
            return Err(Error::ReportMismatch(format!(
                "layer `{}/{}` vs `{}/{}`",
                f.tenant, f.layer, r.tenant, r.layer
            )));
        }
        layers.push(LayerComparison {
            tenant: f.tenant.clone(),
            layer: f.layer.clone(),
            step: f.step.clone(),
            scheme: f.scheme.clone(),
            flexible_cycles: f.cycles,
            rigid_cycles: r.cycles,
            speedup: ratio(r.cycles as f64, f.cycles as f64),
            flexible_utilization: f.utilization,
            rigid_utilization: r.utilization,
            utilization_delta: delta(f.utilization, r.utilization),
            energy_ratio: ratio(r.energy, f.energy),
        });
    }
    let (fu, ru) = (flexible.totals.utilization, rigid.totals.utilization);
    Ok(ComparisonReport {
        scenario: flexible.scenario.clone(),
        flexible_makespan: flexible.makespan,
        rigid_makespan: rigid.makespan,
        speedup: ratio(rigid.makespan as f64, flexible.makespan as f64),
        flexible_utilization: fu,
        rigid_utilization: ru,
        utilization_delta: delta(fu, ru),
        energy_ratio: ratio(rigid.totals.energy, flexible.totals.energy),
        layers,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for l in &self.layers {
            wtr.serialize(l)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = vec![];
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    /// Write `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json() + "\n")?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        Ok(())
    }
}
