//! Table-driven energy accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::DataFormat;

/// Per-operation and per-byte energies in arbitrary units.
///
/// The default table holds relative placeholders normalised to one INT8
/// MAC = 1.0; supply a measured table for absolute numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    /// Energy of one multiply-accumulate, keyed by format name.
    pub mac: BTreeMap<String, f64>,
    pub spm_per_byte: f64,
    pub dram_per_byte: f64,
    /// Extra MAC energy drawn by the bridge logic of the flexible array.
    pub bridge_overhead: f64,
    /// Energy per vector-unit element operation.
    #[serde(default)]
    pub vector_per_element: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        let mac = [
            ("int4", 0.45),
            ("uint4", 0.45),
            ("int8", 1.0),
            ("uint8", 1.0),
            ("fp8a", 1.3),
            ("fp8b", 1.3),
            ("bf16", 3.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        EnergyTable {
            mac,
            spm_per_byte: 0.5,
            dram_per_byte: 20.0,
            bridge_overhead: 0.1073,
            vector_per_element: 0.5,
        }
    }
}

impl EnergyTable {
    pub fn zero() -> Self {
        let mut t = Self::default();
        t.mac.values_mut().for_each(|v| *v = 0.0);
        t.spm_per_byte = 0.0;
        t.dram_per_byte = 0.0;
        t.bridge_overhead = 0.0;
        t.vector_per_element = 0.0;
        t
    }

    pub fn mac_energy(&self, fmt: DataFormat) -> Result<f64> {
        self.mac
            .get(&fmt.to_string())
            .copied()
            .ok_or_else(|| Error::MissingEnergyEntry(fmt.to_string()))
    }

    /// Non-fatal findings: negative entries, or formats whose costs break
    /// the int4 <= int8 <= fp8 <= bf16 ordering.
    pub fn lint(&self) -> Vec<String> {
        let mut out = vec![];
        for (k, v) in &self.mac {
            if *v < 0.0 {
                out.push(format!("negative MAC energy for {k}"));
            }
        }
        for (name, v) in [
            ("spm_per_byte", self.spm_per_byte),
            ("dram_per_byte", self.dram_per_byte),
            ("bridge_overhead", self.bridge_overhead),
            ("vector_per_element", self.vector_per_element),
        ] {
            if v < 0.0 {
                out.push(format!("negative {name}"));
            }
        }
        let order = ["int4", "int8", "fp8a", "bf16"];
        for pair in order.windows(2) {
            if let (Some(a), Some(b)) = (self.mac.get(pair[0]), self.mac.get(pair[1])) {
                if a > b {
                    out.push(format!("{} costs more than {}", pair[0], pair[1]));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub spm: f64,
    pub dram: f64,
    pub total: f64,
}

/// `mac_ops * e_mac * (1 + bridge) + spm_bytes * e_spm + dram_bytes * e_dram`.
/// The bridge term applies only to the flexible array.
pub fn energy(
    mac_ops: u64,
    fmt: DataFormat,
    spm_bytes: u64,
    dram_bytes: u64,
    table: &EnergyTable,
    flexible: bool,
) -> Result<EnergyBreakdown> {
    let bridge = if flexible { table.bridge_overhead } else { 0.0 };
    let mac = if mac_ops == 0 {
        0.0
    } else {
        mac_ops as f64 * table.mac_energy(fmt)? * (1.0 + bridge)
    };
    let spm = spm_bytes as f64 * table.spm_per_byte;
    let dram = dram_bytes as f64 * table.dram_per_byte;
    Ok(EnergyBreakdown {
        mac,
        spm,
        dram,
        total: mac + spm + dram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_table() {
        let e = energy(1000, DataFormat::INT8, 50, 50, &EnergyTable::zero(), true).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn linear_in_mac_entry() {
        let t = EnergyTable::default();
        let mut t2 = t.clone();
        *t2.mac.get_mut("int8").unwrap() *= 2.0;
        let a = energy(1000, DataFormat::INT8, 64, 32, &t, false).unwrap();
        let b = energy(1000, DataFormat::INT8, 64, 32, &t2, false).unwrap();
        assert_eq!(b.mac, 2.0 * a.mac);
        assert_eq!((b.spm, b.dram), (a.spm, a.dram));
    }

    #[test]
    fn missing_entry() {
        let mut t = EnergyTable::default();
        t.mac.remove("bf16");
        assert!(matches!(
            energy(1, DataFormat::BF16, 0, 0, &t, false),
            Err(Error::MissingEnergyEntry(_))
        ));
    }

    #[test]
    fn default_table_is_clean() {
        assert!(EnergyTable::default().lint().is_empty());
        let mut t = EnergyTable::default();
        t.mac.insert("int4".into(), 5.0);
        assert_eq!(t.lint().len(), 1);
    }

    #[test]
    fn bridge_only_on_flexible() {
        let t = EnergyTable::default();
        let f = energy(100, DataFormat::INT8, 0, 0, &t, true).unwrap();
        let r = energy(100, DataFormat::INT8, 0, 0, &t, false).unwrap();
        assert!((f.mac / r.mac - 1.1073).abs() < 1e-12);
    }
}
