//! Oracle-equivalence sweeps over the multiplier.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{multiply, operand_widths, reference_multiply, MultMode, MultOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub a_bits: u64,
    pub b_bits: u64,
    pub got: MultOutput,
    pub expected: MultOutput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub mode: MultMode,
    /// Operand pairs covered (a pass over `L` lanes covers `L` pairs).
    pub pairs: u64,
    pub mismatched_passes: u64,
    pub first_mismatch: Option<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatched_passes == 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.first_mismatch {
            None => write!(f, "{}: {}/{} ok", self.mode, self.pairs, self.pairs),
            Some(m) => write!(
                f,
                "{}: {} mismatching passes; first a={:#x} b={:#x} got {} expected {}",
                self.mode,
                self.mismatched_passes,
                m.a_bits,
                m.b_bits,
                lanes_hex(&m.got),
                lanes_hex(&m.expected)
            ),
        }
    }
}

fn lanes_hex(out: &MultOutput) -> String {
    out.lanes
        .iter()
        .map(|l| match l {
            super::LaneValue::Float(v) => format!("{:#x}", v.bits()),
            super::LaneValue::Int(v) => v.to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

struct Sweep {
    report: VerifyReport,
}

impl Sweep {
    fn new(mode: MultMode) -> Self {
        Sweep {
            report: VerifyReport {
                mode,
                pairs: 0,
                mismatched_passes: 0,
                first_mismatch: None,
            },
        }
    }

    fn check(&mut self, a: u64, b: u64, pairs: u64) -> Result<()> {
        let mode = self.report.mode;
        let got = multiply(a, b, &mode)?;
        let expected = reference_multiply(a, b, &mode)?;
        self.report.pairs += pairs;
        if got != expected {
            self.report.mismatched_passes += 1;
            self.report.first_mismatch.get_or_insert(Mismatch {
                a_bits: a,
                b_bits: b,
                got,
                expected,
            });
        }
        Ok(())
    }
}

/// Check every `(a, b)` element pair of `mode`.
///
/// Consecutive pairs of the enumeration share one multiplier pass, so pair
/// `i` lands in lane `i % lanes`. Only modes whose element pairs number at
/// most 2^16 are accepted.
pub fn verify_exhaustive(mode: &MultMode) -> Result<VerifyReport> {
    mode.validate()?;
    let (wa, wb) = (mode.a_element_width(), mode.b_element_width());
    if wa + wb > 16 {
        return Err(Error::Unsupported(format!(
            "exhaustive sweep of {mode} ({} pairs); use sampling",
            1u64 << (wa + wb)
        )));
    }
    let lanes = mode.lanes() as u64;
    let total = 1u64 << (wa + wb);
    let mut sweep = Sweep::new(*mode);
    let mut idx = 0;
    while idx < total {
        let (mut a, mut b) = (0u64, 0u64);
        let take = lanes.min(total - idx);
        for lane in 0..take {
            let pair = idx + lane;
            a |= (pair >> wb) << (wa * lane as u32);
            b |= (pair & ((1 << wb) - 1)) << (wb * lane as u32);
        }
        sweep.check(a, b, take)?;
        idx += take;
    }
    Ok(sweep.report)
}

/// Check `samples` random full-width passes drawn from a seeded generator.
pub fn verify_samples(mode: &MultMode, samples: u64, seed: u64) -> Result<VerifyReport> {
    mode.validate()?;
    let (aw, bw) = operand_widths(mode);
    let lanes = mode.lanes() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = Sweep::new(*mode);
    for _ in 0..samples {
        let a = rng.gen::<u64>() & ((1u64 << aw) - 1);
        let b = rng.gen::<u64>() & ((1u64 << bw) - 1);
        sweep.check(a, b, lanes)?;
    }
    Ok(sweep.report)
}
