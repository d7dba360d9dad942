//! Fusible/fissionable MAC array: block topology, fusion patterns, data
//! mapping and a functional model, plus a rigid systolic array baseline.
//!
//! ```
//! use flexmac::array::{configure, FusionPattern};
//! use flexmac::multiplier::MultMode;
//!
//! let cfg = configure(FusionPattern::G, &[MultMode::for_format(flexmac::formats::DataFormat::INT8)]).unwrap();
//! let dims: Vec<_> = cfg.partitions.iter().map(|p| (p.rows, p.cols)).collect();
//! assert_eq!(dims, [(128, 64), (64, 64), (64, 64)]);
//! ```

mod functional;
mod layer;
mod mapping;

pub use functional::{
    execute_functional, execute_gemm, execute_gemm_with, gemm_oracle, MacEngine, Tensor,
};
pub use layer::{ConvDims, DwConvDims, GemmDims, LayerOp, LayerSpec, Step, VectorDims, Workload};
pub use mapping::{map_layer, map_layer_rigid, utilization, FoldClass, LrmuGroups, Mapping};

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::MultMode;

/// Physical dimensions of the array hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    pub blocks: usize,
    pub subarrays_per_block: u32,
    pub subarray_rows: u32,
    pub columns: u32,
    pub lrmu_rows: u32,
}

pub const GEOMETRY: ArrayGeometry = ArrayGeometry {
    blocks: 4,
    subarrays_per_block: 7,
    subarray_rows: 9,
    columns: 64,
    lrmu_rows: 1,
};

impl ArrayGeometry {
    pub fn block_rows(&self) -> u32 {
        self.subarrays_per_block * self.subarray_rows + self.lrmu_rows
    }

    pub fn block_units(&self) -> u64 {
        self.block_rows() as u64 * self.columns as u64
    }

    /// Independent LRMU groups of `group_size` units each.
    pub fn lrmu_groups(&self, group_size: u32) -> u32 {
        self.columns / group_size.max(1)
    }
}

/// Legal global-bridge settings; block ids are 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionPattern {
    /// Four 64x64 arrays.
    E,
    /// Two 64x128 arrays.
    F,
    /// One 128x64 array and two 64x64 arrays.
    G,
    /// One 128x128 array.
    H,
}

impl FusionPattern {
    pub const ALL: [FusionPattern; 4] = [
        FusionPattern::E,
        FusionPattern::F,
        FusionPattern::G,
        FusionPattern::H,
    ];

    pub fn from_index(i: u32) -> Result<Self> {
        Self::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::IllegalPattern(i.to_string()))
    }

    pub fn index(&self) -> u32 {
        *self as u32
    }

    /// Block groups forming each partition, as `(rows, cols, blocks)`.
    fn layout(&self) -> &'static [(u32, u32, &'static [usize])] {
        match self {
            FusionPattern::E => &[
                (64, 64, &[0]),
                (64, 64, &[1]),
                (64, 64, &[2]),
                (64, 64, &[3]),
            ],
            FusionPattern::F => &[(64, 128, &[0, 1]), (64, 128, &[2, 3])],
            FusionPattern::G => &[(128, 64, &[0, 2]), (64, 64, &[1]), (64, 64, &[3])],
            FusionPattern::H => &[(128, 128, &[0, 1, 2, 3])],
        }
    }

    pub fn partition_count(&self) -> usize {
        self.layout().len()
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.layout()
            .iter()
            .enumerate()
            .map(|(id, &(rows, cols, blocks))| Partition {
                id,
                rows,
                cols,
                blocks: blocks.iter().copied().collect(),
            })
            .collect()
    }
}

impl fmt::Display for FusionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["e", "f", "g", "h"][*self as usize])
    }
}

impl FromStr for FusionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "e" => Ok(FusionPattern::E),
            "f" => Ok(FusionPattern::F),
            "g" => Ok(FusionPattern::G),
            "h" => Ok(FusionPattern::H),
            _ => Err(Error::IllegalPattern(s.to_string())),
        }
    }
}

/// A rectangular group of fused blocks serving one workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub id: usize,
    pub rows: u32,
    pub cols: u32,
    pub blocks: ArrayVec<usize, 4>,
}

impl Partition {
    pub fn units(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    /// A standalone partition of the given size, for what-if runs.
    pub fn standalone(rows: u32, cols: u32) -> Result<Self> {
        let pattern = match (rows, cols) {
            (64, 64) => FusionPattern::E,
            (64, 128) => FusionPattern::F,
            (128, 64) => FusionPattern::G,
            (128, 128) => FusionPattern::H,
            _ => return Err(Error::IllegalPattern(format!("{rows}x{cols}"))),
        };
        Ok(pattern.partitions().into_iter().next().expect("non-empty"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// MAC results reduce over input channels; psums flow down the columns.
    Accumulable,
    /// No reduction over input channels; each subarray and LRMU group drains
    /// on its own.
    Unaccumulable,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Accumulable => "accumulable",
            Scheme::Unaccumulable => "unaccumulable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayConfig {
    pub pattern: FusionPattern,
    pub partitions: Vec<Partition>,
    /// Per block: local bridges connected (accumulable mapping).
    pub local_bridges: [bool; 4],
    /// Per partition multiplier mode.
    pub modes: Vec<MultMode>,
}

/// Build an array configuration. `modes` holds one mode per partition, or a
/// single mode shared by all of them.
pub fn configure(pattern: FusionPattern, modes: &[MultMode]) -> Result<ArrayConfig> {
    let partitions = pattern.partitions();
    let modes = match modes.len() {
        1 => vec![modes[0]; partitions.len()],
        n if n == partitions.len() => modes.to_vec(),
        n => {
            return Err(Error::ShapeMismatch(format!(
                "{n} modes for {} partitions of pattern {pattern}",
                partitions.len()
            )))
        }
    };
    for m in &modes {
        m.validate()?;
    }
    Ok(ArrayConfig {
        pattern,
        partitions,
        local_bridges: [true; 4],
        modes,
    })
}

impl ArrayConfig {
    pub fn set_scheme(&mut self, partition: usize, scheme: Scheme) -> Result<()> {
        let p = self
            .partitions
            .get(partition)
            .ok_or_else(|| Error::ShapeMismatch(format!("no partition {partition}")))?;
        for &b in &p.blocks {
            self.local_bridges[b] = scheme == Scheme::Accumulable;
        }
        Ok(())
    }

    /// Partition containing `block`.
    pub fn partition_of(&self, block: usize) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.blocks.contains(&block))
    }
}

/// TPU-like weight-stationary array whose output bus is one word per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidSA {
    pub rows: u32,
    pub cols: u32,
}

impl RigidSA {
    pub fn new(rows: u32, cols: u32) -> Self {
        RigidSA { rows, cols }
    }

    pub fn output_bus_width(&self) -> u32 {
        self.cols
    }

    pub fn units(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    /// Only one workload at a time: co-mapping a second one is rejected.
    pub fn co_map(&self, workloads: usize) -> Result<()> {
        if workloads > 1 {
            return Err(Error::TooManyTenants {
                tenants: workloads,
                partitions: 1,
            });
        }
        Ok(())
    }
}

/// Assign tenants to partitions: the largest demand gets the largest
/// partition. Ties keep declaration order on both sides.
pub fn partition_tenants(config: &ArrayConfig, demands: &[u64]) -> Result<Vec<usize>> {
    let n = config.partitions.len();
    if demands.len() > n {
        return Err(Error::TooManyTenants {
            tenants: demands.len(),
            partitions: n,
        });
    }
    let mut tenants: Vec<usize> = (0..demands.len()).collect();
    tenants.sort_by(|&a, &b| demands[b].cmp(&demands[a]));
    let mut parts: Vec<usize> = (0..n).collect();
    parts.sort_by(|&a, &b| {
        config.partitions[b]
            .units()
            .cmp(&config.partitions[a].units())
    });
    let mut out = vec![0; demands.len()];
    for (t, p) in tenants.into_iter().zip(parts) {
        out[t] = p;
    }
    Ok(out)
}
