//! Cycle, traffic and energy models.
//!
//! A tile is one weight-stationary pass: `rows` weight rows are loaded one
//! per cycle, `stream` input vectors enter skewed by one cycle per row and
//! one per column, and psums leave the bottom of each column.
//!
//! ```
//! use flexmac::timing::{event_oracle, tile_cycles};
//!
//! assert_eq!(tile_cycles(4, 4, 16), 26);
//! assert_eq!(event_oracle(4, 4, 16), 26);
//! ```

mod energy;
mod oracle;
mod report;

pub use energy::{energy, EnergyBreakdown, EnergyTable};
pub use oracle::event_oracle;
pub use report::{LayerReport, RunReport, TenantSummary, Totals};

use serde::{Deserialize, Serialize};

use crate::array::{LayerOp, LayerSpec, Mapping, Workload};
use crate::formats::DataFormat;

/// Closed-form cycles of one tile: `R` prefill, then `T + R + C - 2` for
/// the skewed stream to pass and drain.
pub fn tile_cycles(rows: u64, cols: u64, stream: u64) -> u64 {
    rows + stream + rows + cols - 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub spm_bytes: u64,
    pub double_buffered: bool,
    /// DRAM bytes per cycle.
    pub dram_bandwidth: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            spm_bytes: 16 << 20,
            double_buffered: true,
            dram_bandwidth: 256.0,
        }
    }
}

impl MemoryConfig {
    /// SPM space available for one layer's resident working set.
    pub fn working_bytes(&self) -> u64 {
        if self.double_buffered {
            self.spm_bytes / 2
        } else {
            self.spm_bytes
        }
    }
}

/// Element-wise unit for non-MAC layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorUnit {
    pub lanes: u64,
    pub cycles_per_element: f64,
}

impl Default for VectorUnit {
    fn default() -> Self {
        VectorUnit {
            lanes: 128,
            cycles_per_element: 1.0,
        }
    }
}

impl VectorUnit {
    pub fn cycles(&self, elements: u64) -> u64 {
        (elements as f64 * self.cycles_per_element / self.lanes as f64).ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub spm_bytes: u64,
    pub dram_bytes: u64,
}

fn bytes(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64).div_ceil(8)
}

/// DRAM traffic for operand sizes in bytes, given the fold structure.
///
/// A working set that fits the SPM is moved once. Otherwise weights are
/// still fetched once, the input slice of each reduction pass is refetched
/// for every column fold unless it fits, and outputs are written after
/// every reduction pass and read back before all but the first.
pub fn dram_traffic(
    (weights, inputs, outputs): (u64, u64, u64),
    row_folds: u64,
    col_folds: u64,
    mem: &MemoryConfig,
) -> u64 {
    let cap = mem.working_bytes();
    if weights + inputs + outputs <= cap {
        return weights + inputs + outputs;
    }
    let input_traffic = if inputs.div_ceil(row_folds.max(1)) <= cap {
        inputs
    } else {
        inputs * col_folds
    };
    weights + input_traffic + outputs * (2 * row_folds.max(1) - 1)
}

/// SPM and DRAM bytes moved by a mapped layer.
///
/// A fold of an unaccumulable layer may hold any rectangle of segments by
/// groups, so the cheapest shape is taken. Column folds of a depthwise layer
/// cover disjoint channels, so each reads only its own slice of the input.
pub fn traffic(
    layer: &LayerSpec,
    mapping: &Mapping,
    fmt: DataFormat,
    mem: &MemoryConfig,
) -> Traffic {
    let bits = fmt.width();
    let (w, i, o) = layer.tensor_elements();
    let sizes = (bytes(w, bits), bytes(i, bits), bytes(o, bits));
    let disjoint = matches!(layer.op, LayerOp::Dwconv(_));
    let dram = match layer.workload() {
        Workload::Unaccumulable { groups, .. } => {
            let segments = mapping.segments;
            let per_fold = (groups * segments).div_ceil(mapping.folds.max(1)).max(1);
            (1..=segments.min(per_fold))
                .map(|s| {
                    let col_folds = if disjoint {
                        1
                    } else {
                        groups.div_ceil(per_fold / s)
                    };
                    dram_traffic(sizes, segments.div_ceil(s), col_folds, mem)
                })
                .min()
                .unwrap_or(0)
        }
        _ => dram_traffic(sizes, mapping.row_folds, mapping.col_folds, mem),
    };
    // on-chip: weights loaded per tile, inputs streamed per tile, psums out
    let mut spm = 0u64;
    for c in &mapping.classes {
        let lanes = c.mapped_lanes.round() as u64;
        let fan_in = lanes.div_ceil(c.psum_streams.max(1));
        spm += c.count
            * (bytes(lanes, bits) + bytes(c.stream * fan_in, bits) + c.stream * c.psum_streams * 4);
    }
    Traffic {
        spm_bytes: spm,
        dram_bytes: dram,
    }
}

/// Traffic of a vector layer: read and write every element on chip.
pub fn vector_traffic(elements: u64, fmt: DataFormat) -> Traffic {
    Traffic {
        spm_bytes: 2 * bytes(elements, fmt.width()),
        dram_bytes: 0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub cycles: u64,
}

/// Cycles of a mapped layer with double-buffered DMA.
///
/// Each fold's DRAM share is fetched while the previous fold computes (the
/// first fold's while the previous layer runs), so a fold costs
/// `max(compute, transfer)`.
pub fn layer_cycles(mapping: &Mapping, dram_bytes: u64, mem: &MemoryConfig) -> LayerTiming {
    let per_fold = if mapping.folds == 0 {
        0.0
    } else {
        dram_bytes as f64 / mapping.folds as f64 / mem.dram_bandwidth
    };
    let mut compute = 0u64;
    let mut total = 0f64;
    for c in &mapping.classes {
        let t = tile_cycles(c.rows as u64, c.cols as u64, c.stream);
        compute += c.count * t;
        total += c.count as f64 * (t as f64).max(per_fold);
    }
    let cycles = (total.ceil() as u64).max(compute);
    LayerTiming {
        compute_cycles: compute,
        stall_cycles: cycles - compute,
        cycles,
    }
}
