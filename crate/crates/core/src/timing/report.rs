//! Run reports: one row per layer plus totals, as JSON or CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MemoryConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub tenant: String,
    pub partition: usize,
    pub layer: String,
    pub op: String,
    pub step: String,
    pub scheme: String,
    pub format: String,
    pub folds: u64,
    pub cycles: u64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    /// Empty for vector-unit layers.
    pub utilization: Option<f64>,
    pub mac_ops: u64,
    pub spm_bytes: u64,
    pub dram_bytes: u64,
    pub energy: f64,
    /// Lane-cycles of capacity behind `utilization`, for weighted totals.
    pub lane_cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenantSummary {
    pub name: String,
    /// Index of the scenario stage the entry belongs to.
    #[serde(default)]
    pub stage: usize,
    pub partition: usize,
    pub rows: u32,
    pub cols: u32,
    /// Completion time measured from the start of the scenario.
    pub cycles: u64,
    pub utilization: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub cycles: u64,
    pub mac_ops: u64,
    pub spm_bytes: u64,
    pub dram_bytes: u64,
    pub energy: f64,
    pub utilization: Option<f64>,
}

impl Totals {
    pub fn of(layers: &[LayerReport]) -> Self {
        let mut t = Totals::default();
        let (mut num, mut den) = (0.0, 0.0);
        for l in layers {
            t.cycles += l.cycles;
            t.mac_ops += l.mac_ops;
            t.spm_bytes += l.spm_bytes;
            t.dram_bytes += l.dram_bytes;
            t.energy += l.energy;
            if let Some(u) = l.utilization {
                num += u * l.lane_cycles;
                den += l.lane_cycles;
            }
        }
        t.utilization = (den > 0.0).then(|| num / den);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    /// `flexible` or `rigid`.
    pub array: String,
    pub pattern: String,
    pub memory: MemoryConfig,
    pub tenants: Vec<TenantSummary>,
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
    /// Completion time of the slowest tenant.
    pub makespan: u64,
}

impl RunReport {
    pub fn new(
        scenario: impl Into<String>,
        array: impl Into<String>,
        pattern: impl Into<String>,
        memory: MemoryConfig,
        tenants: Vec<TenantSummary>,
        layers: Vec<LayerReport>,
    ) -> Self {
        let totals = Totals::of(&layers);
        let makespan = tenants.iter().map(|t| t.cycles).max().unwrap_or(0);
        RunReport {
            scenario: scenario.into(),
            array: array.into(),
            pattern: pattern.into(),
            memory,
            tenants,
            layers,
            totals,
            makespan,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| crate::Error::Schema {
            field: "report".into(),
            detail: e.to_string(),
        })
    }

    /// One row per layer; columns follow [`LayerReport`] field order.
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
