//! Instruction-level model of the array behind its four instructions.

use std::collections::VecDeque;

use super::{decode, encode, ControlWord, Instruction, Kind};
use crate::array::{FusionPattern, MacEngine, Scheme, Tensor};
use crate::error::{Error, Result};
use crate::formats::DataFormat;

/// Block `b` writes its outputs to the SPM address held in `x(28 + b)`.
pub const OUTPUT_BASE_REG: usize = 28;

const ROWS: usize = 64;
const COLS: usize = 64;
/// Blocks 0 and 1 form the top row of the 2x2 block grid.
const BLOCKS_PER_ROW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Loaded,
    Configured,
    Computing,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Loaded => "weights-loaded",
            Phase::Configured => "configured",
            Phase::Computing => "computing",
        }
    }
}

#[derive(Debug, Clone)]
enum PsumRow {
    Int(Vec<i32>),
    Float(Vec<f32>),
}

struct Block {
    phase: Phase,
    /// `ROWS x COLS` packed unit words; rows past the loaded count are zero.
    weights: Vec<u32>,
    pattern: Option<FusionPattern>,
    format: Option<DataFormat>,
    scheme: Scheme,
    /// Psums produced by `mm` and not yet written back or handed down.
    pending: VecDeque<PsumRow>,
}

impl Block {
    fn new() -> Self {
        Block {
            phase: Phase::Idle,
            weights: vec![0; ROWS * COLS],
            pattern: None,
            format: None,
            scheme: Scheme::Accumulable,
            pending: VecDeque::new(),
        }
    }
}

/// Registers, scratchpad and the four array blocks.
pub struct MachineState {
    pub regs: [u64; 32],
    pub spm: Vec<u8>,
    /// Instructions retired.
    pub retired: u64,
    blocks: [Block; 4],
    engines: Vec<MacEngine>,
}

impl MachineState {
    pub fn new(spm_bytes: usize) -> Self {
        MachineState {
            regs: [0; 32],
            spm: vec![0; spm_bytes],
            retired: 0,
            blocks: std::array::from_fn(|_| Block::new()),
            engines: vec![],
        }
    }

    fn span(&self, addr: u64, len: u64) -> Result<std::ops::Range<usize>> {
        let size = self.spm.len() as u64;
        match addr.checked_add(len) {
            Some(end) if end <= size => Ok(addr as usize..end as usize),
            _ => Err(Error::SpmOutOfBounds { addr, len, size }),
        }
    }

    pub fn write_words(&mut self, addr: u64, words: &[u32]) -> Result<()> {
        let r = self.span(addr, 4 * words.len() as u64)?;
        for (dst, w) in self.spm[r].chunks_exact_mut(4).zip(words) {
            dst.copy_from_slice(&w.to_le_bytes());
        }
        Ok(())
    }

    pub fn read_words(&self, addr: u64, count: usize) -> Result<Vec<u32>> {
        let r = self.span(addr, 4 * count as u64)?;
        Ok(self.spm[r]
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }

    /// Scheme latched by the last `sc` on `block`, while it is active.
    pub fn block_scheme(&self, block: usize) -> Option<Scheme> {
        let b = self.blocks.get(block)?;
        (b.phase != Phase::Idle && b.format.is_some()).then_some(b.scheme)
    }

    /// Decode and execute each word in order.
    pub fn run(&mut self, program: &[u32]) -> Result<()> {
        for &w in program {
            self.execute(&decode(w)?)?;
        }
        Ok(())
    }

    pub fn execute(&mut self, i: &Instruction) -> Result<()> {
        // reject anything that would not survive encoding
        encode(i)?;
        let b = i.block as usize;
        let phase = self.blocks[b].phase;
        let allowed = match i.kind {
            Kind::ReadWeights => phase == Phase::Idle,
            Kind::StartCompute => phase == Phase::Loaded,
            Kind::MatrixMultiply => matches!(phase, Phase::Configured | Phase::Computing),
            Kind::EndCompute => phase == Phase::Computing,
        };
        if !allowed {
            return Err(Error::Ordering {
                block: b,
                instr: i.kind.mnemonic(),
                state: phase.name(),
            });
        }
        match i.kind {
            Kind::ReadWeights => self.read_weights(b, i)?,
            Kind::StartCompute => self.start_compute(b, i)?,
            Kind::MatrixMultiply => self.matrix_multiply(b, i)?,
            Kind::EndCompute => self.end_compute(b)?,
        }
        self.retired += 1;
        Ok(())
    }

    fn read_weights(&mut self, b: usize, i: &Instruction) -> Result<()> {
        let addr = self.regs[i.rs1 as usize];
        let rows = self.regs[i.rs2 as usize];
        if rows > ROWS as u64 {
            return Err(Error::Execution(format!(
                "block {b}: rw of {rows} rows exceeds {ROWS}"
            )));
        }
        let words = self.read_words(addr, rows as usize * COLS)?;
        let blk = &mut self.blocks[b];
        blk.weights.fill(0);
        blk.weights[..words.len()].copy_from_slice(&words);
        blk.phase = Phase::Loaded;
        Ok(())
    }

    fn start_compute(&mut self, b: usize, i: &Instruction) -> Result<()> {
        let pattern = FusionPattern::from_index(i.func3 as u32)?;
        let control = ControlWord::decode(i.func7)?;
        for (o, other) in self.blocks.iter().enumerate() {
            if o != b && other.phase != Phase::Idle {
                if let Some(p) = other.pattern.filter(|p| *p != pattern) {
                    return Err(Error::Execution(format!(
                        "block {b} requests pattern {pattern} while block {o} runs pattern {p}"
                    )));
                }
            }
        }
        let name = control.mode.to_string();
        let format: DataFormat = name.parse().map_err(|_| {
            Error::Unsupported(format!(
                "mixed-precision mode {name} in the functional model"
            ))
        })?;
        if !self.engines.iter().any(|e| e.format() == format) {
            self.engines.push(MacEngine::new(format)?);
        }
        let blk = &mut self.blocks[b];
        blk.pattern = Some(pattern);
        blk.format = Some(format);
        blk.scheme = control.scheme;
        blk.phase = Phase::Configured;
        Ok(())
    }

    fn matrix_multiply(&mut self, b: usize, i: &Instruction) -> Result<()> {
        let addr = self.regs[i.rs1 as usize];
        let count = self.regs[i.rs2 as usize] as usize;
        let format = self.blocks[b]
            .format
            .expect("configured block has a format");
        let pattern = self.blocks[b]
            .pattern
            .expect("configured block has a pattern");
        let upper = upper_partner(pattern, b);
        if let Some(u) = upper {
            let up = &self.blocks[u];
            if up.format != Some(format) {
                return Err(Error::ModeMismatch(format!(
                    "block {b} continues psums of block {u} in a different format"
                )));
            }
            if up.pending.len() < count {
                return Err(Error::Execution(format!(
                    "block {b} needs {count} psum rows from block {u}, {} pending",
                    up.pending.len()
                )));
            }
        }
        let inputs = self.read_words(addr, count * ROWS)?;
        let engine = self
            .engines
            .iter()
            .find(|e| e.format() == format)
            .expect("engine built at start compute");
        let (lanes, width) = (engine.lanes(), format.width());
        let weights = &self.blocks[b].weights;
        // column-major element view of the weights
        let mut wcols = vec![0u32; COLS * ROWS * lanes];
        for r in 0..ROWS {
            for c in 0..COLS {
                let w = weights[r * COLS + c];
                for l in 0..lanes {
                    wcols[c * ROWS * lanes + r * lanes + l] = lane(w, l, width);
                }
            }
        }
        let mut out = Vec::with_capacity(count);
        for t in 0..count {
            let xs: Vec<u32> = inputs[t * ROWS..(t + 1) * ROWS]
                .iter()
                .flat_map(|&w| (0..lanes).map(move |l| lane(w, l, width)))
                .collect();
            let start = match upper {
                Some(u) => self.blocks[u].pending.pop_front().expect("checked above"),
                None if engine.is_float() => PsumRow::Float(vec![0.0; COLS]),
                None => PsumRow::Int(vec![0; COLS]),
            };
            let row = match start {
                PsumRow::Int(mut acc) => {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a = engine.mac_int(
                            *a,
                            &xs,
                            &wcols[c * ROWS * lanes..(c + 1) * ROWS * lanes],
                        );
                    }
                    PsumRow::Int(acc)
                }
                PsumRow::Float(mut acc) => {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a = engine.mac_float(
                            *a,
                            &xs,
                            &wcols[c * ROWS * lanes..(c + 1) * ROWS * lanes],
                        );
                    }
                    PsumRow::Float(acc)
                }
            };
            out.push(row);
        }
        let blk = &mut self.blocks[b];
        blk.pending.extend(out);
        blk.phase = Phase::Computing;
        Ok(())
    }

    fn end_compute(&mut self, b: usize) -> Result<()> {
        let pattern = self.blocks[b]
            .pattern
            .expect("computing block has a pattern");
        let feeds_lower = lower_partner(pattern, b).is_some();
        if !feeds_lower {
            let format = self.blocks[b].format.expect("computing block has a format");
            let engine = self
                .engines
                .iter()
                .find(|e| e.format() == format)
                .expect("engine built at start compute");
            let words: Vec<u32> = self.blocks[b]
                .pending
                .drain(..)
                .flat_map(|row| match row {
                    PsumRow::Int(v) => v.into_iter().map(|x| x as u32).collect::<Vec<_>>(),
                    PsumRow::Float(v) => v.into_iter().map(|x| engine.encode_output(x)).collect(),
                })
                .collect();
            let addr = self.regs[OUTPUT_BASE_REG + b];
            self.write_words(addr, &words)?;
        }
        let blk = &mut self.blocks[b];
        blk.weights.fill(0);
        blk.phase = Phase::Idle;
        Ok(())
    }
}

fn lane(word: u32, l: usize, width: u32) -> u32 {
    (word >> (l as u32 * width)) & ((1u64 << width) - 1) as u32
}

/// Upper block whose psums flow into `b` under vertical fusion.
fn upper_partner(pattern: FusionPattern, b: usize) -> Option<usize> {
    match (pattern, b) {
        (FusionPattern::G, 2) | (FusionPattern::H, 2) => Some(0),
        (FusionPattern::H, 3) => Some(1),
        _ => None,
    }
}

fn lower_partner(pattern: FusionPattern, b: usize) -> Option<usize> {
    match (pattern, b) {
        (FusionPattern::G, 0) | (FusionPattern::H, 0) => Some(2),
        (FusionPattern::H, 1) => Some(3),
        _ => None,
    }
}

/// Pack elements `lanes` at a time into unit words, lane 0 in the low bits.
pub fn pack_words(elems: &[u32], width: u32, lanes: usize) -> Vec<u32> {
    elems
        .chunks(lanes)
        .map(|ch| {
            ch.iter()
                .enumerate()
                .fold(0, |w, (l, &e)| w | e << (l as u32 * width))
        })
        .collect()
}

/// Run `a[m x k] * b[k x n]` as an instruction program on the first
/// partition of `pattern`. The product must fit the partition in one pass.
pub fn gemm_via_isa(
    pattern: FusionPattern,
    fmt: DataFormat,
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
    let part = pattern.partitions().remove(0);
    let lanes = MacEngine::new(fmt)?.lanes();
    let width = fmt.width();
    let block_elems = ROWS * lanes;
    if k > part.rows as usize * lanes || n > part.cols as usize {
        return Err(Error::Unsupported(format!(
            "{k}x{n} weights exceed one pass of a {}x{} partition",
            part.rows, part.cols
        )));
    }
    let control = ControlWord::new(fmt, Scheme::Accumulable);

    let in_bytes = (m * ROWS * 4) as u64;
    let w_bytes = (ROWS * COLS * 4) as u64;
    let out_bytes = (m * COLS * 4) as u64;
    let mut machine = MachineState::new((4 * (in_bytes + w_bytes + out_bytes)) as usize);
    let mut program = vec![];
    // upper blocks first so their psums are pending when the lower block runs
    let mut blocks: Vec<usize> = part.blocks.to_vec();
    blocks.sort_unstable();
    let per_row = BLOCKS_PER_ROW;
    for &blk in &blocks {
        let (br, bc) = (blk / per_row, blk % per_row);
        let (br, bc) = (br - blocks[0] / per_row, bc - blocks[0] % per_row);
        let base = blk as u64 * (in_bytes + w_bytes + out_bytes);
        let (w_addr, i_addr, o_addr) = (base, base + w_bytes, base + w_bytes + in_bytes);
        let k0 = (br * block_elems).min(k);
        let k1 = (k0 + block_elems).min(k);
        let c0 = (bc * COLS).min(n);
        let c1 = (c0 + COLS).min(n);

        let mut welems = vec![0u32; block_elems * COLS];
        for r in k0..k1 {
            for c in c0..c1 {
                welems[(c - c0) * block_elems + (r - k0)] = b.data[r * n + c];
            }
        }
        let mut wwords = vec![0u32; ROWS * COLS];
        for c in 0..COLS {
            let col = pack_words(
                &welems[c * block_elems..(c + 1) * block_elems],
                width,
                lanes,
            );
            for (r, w) in col.into_iter().enumerate() {
                wwords[r * COLS + c] = w;
            }
        }
        let mut iwords = Vec::with_capacity(m * ROWS);
        for t in 0..m {
            let mut row = vec![0u32; block_elems];
            row[..k1 - k0].copy_from_slice(&a.data[t * k + k0..t * k + k1]);
            iwords.extend(pack_words(&row, width, lanes));
        }
        machine.write_words(w_addr, &wwords)?;
        machine.write_words(i_addr, &iwords)?;

        let r = 1 + 4 * blk;
        machine.regs[r] = w_addr;
        machine.regs[r + 1] = (k1 - k0).div_ceil(lanes) as u64;
        machine.regs[r + 2] = i_addr;
        machine.regs[r + 3] = m as u64;
        machine.regs[OUTPUT_BASE_REG + blk] = o_addr;
        let bl = blk as u8;
        let r = r as u8;
        program.push(Instruction::rw(bl, r, r + 1));
        program.push(Instruction::sc(bl, pattern, control)?);
        program.push(Instruction::mm(bl, r + 2, r + 3));
        program.push(Instruction::ec(bl));
    }
    let words = program.iter().map(encode).collect::<Result<Vec<_>>>()?;
    machine.run(&words)?;

    let mut out = vec![0u32; m * n];
    for &blk in &blocks {
        if lower_partner(pattern, blk).is_some() {
            continue;
        }
        let bc = blk % per_row - blocks[0] % per_row;
        let o_addr = machine.regs[OUTPUT_BASE_REG + blk];
        let words = machine.read_words(o_addr, m * COLS)?;
        for t in 0..m {
            for c in bc * COLS..((bc + 1) * COLS).min(n) {
                out[t * n + c] = words[t * COLS + c - bc * COLS];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(m: &mut MachineState) {
        m.regs[1] = 0;
        m.regs[2] = 1;
        m.regs[3] = 0x4000;
        m.regs[4] = 1;
        m.regs[OUTPUT_BASE_REG] = 0x8000;
    }

    #[test]
    fn compute_before_weights_is_ordering_error() {
        let mut m = MachineState::new(1 << 16);
        setup(&mut m);
        let err = m.execute(&Instruction::mm(0, 3, 4)).unwrap_err();
        assert!(matches!(
            err,
            Error::Ordering {
                block: 0,
                instr: "mm",
                ..
            }
        ));
        let err = m.execute(&Instruction::ec(0)).unwrap_err();
        assert!(matches!(err, Error::Ordering { instr: "ec", .. }));
    }

    #[test]
    fn spm_bounds() {
        let mut m = MachineState::new(1024);
        m.regs[1] = 1000;
        m.regs[2] = 1;
        let err = m.execute(&Instruction::rw(0, 1, 2)).unwrap_err();
        assert!(matches!(
            err,
            Error::SpmOutOfBounds {
                addr: 1000,
                len: 256,
                size: 1024
            }
        ));
    }

    #[test]
    fn single_row_int8() {
        let mut m = MachineState::new(1 << 16);
        setup(&mut m);
        // weight row 0: column c holds c
        m.write_words(0, &(0..64).collect::<Vec<_>>()).unwrap();
        let mut x = vec![0u32; 64];
        x[0] = 3;
        m.write_words(0x4000, &x).unwrap();
        let sc = Instruction::sc(
            0,
            FusionPattern::E,
            ControlWord::new(DataFormat::INT8, Scheme::Accumulable),
        )
        .unwrap();
        for i in [
            Instruction::rw(0, 1, 2),
            sc,
            Instruction::mm(0, 3, 4),
            Instruction::ec(0),
        ] {
            m.execute(&i).unwrap();
        }
        let out = m.read_words(0x8000, 64).unwrap();
        assert_eq!(out[5] as i32, 15);
        assert_eq!(out[63] as i32, 189);
        assert_eq!(m.retired, 4);
    }

    #[test]
    fn reserved_control_bits_rejected() {
        let mut m = MachineState::new(1 << 16);
        setup(&mut m);
        m.execute(&Instruction::rw(0, 1, 2)).unwrap();
        let mut sc = Instruction::sc(
            0,
            FusionPattern::E,
            ControlWord::new(DataFormat::INT8, Scheme::Accumulable),
        )
        .unwrap();
        sc.func7 |= 0b100_0000;
        assert!(matches!(
            m.execute(&sc),
            Err(Error::Decode {
                field: "funct7",
                ..
            })
        ));
    }

    #[test]
    fn pack_lane_order() {
        assert_eq!(pack_words(&[1, 2, 3, 4], 4, 4), vec![0x4321]);
        assert_eq!(lane(0x4321, 2, 4), 3);
    }
}
