//! The four custom instructions that drive the MAC array.
//!
//! Word layout (RISC-V R-type): `funct7[31:25] rs2[24:20] rs1[19:15]
//! funct3[14:12] rd[11:7] opcode[6:0]`.
//!
//! | kind | opcode | `rd[2]` |
//! |------|--------|---------|
//! | read weights (`rw`) | `1011011` | 0 |
//! | matrix multiply (`mm`) | `1011011` | 1 |
//! | start compute (`sc`) | `1111011` | 0 |
//! | end compute (`ec`) | `1111011` | 1 |
//!
//! `rd[1:0]` names the array block and `rd[4:3]` must be zero. `rs1` and
//! `rs2` name registers holding an SPM byte address and a block size `B`.
//! For `sc`, `funct3` selects the fusion pattern (0..=3 for e..h) and
//! `funct7` holds the per-block control word, see [`ControlWord`].
//!
//! ```
//! use flexmac::isa::{decode, encode, Instruction};
//!
//! let w = encode(&Instruction::ec(0)).unwrap();
//! assert_eq!(w & 0x7f, 0b1111011);
//! assert_eq!(decode(w).unwrap(), Instruction::ec(0));
//! ```

mod asm;
mod machine;

pub use asm::{assemble, disassemble, from_bytes, to_bytes};
pub use machine::{gemm_via_isa, pack_words, MachineState, OUTPUT_BASE_REG};

use crate::array::{FusionPattern, Scheme};
use crate::error::{Error, Result};
use crate::formats::DataFormat;
use crate::multiplier::{Datatype, MultMode};

pub const OPCODE_RW_MM: u32 = 0b101_1011;
pub const OPCODE_SC_EC: u32 = 0b111_1011;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    ReadWeights,
    StartCompute,
    MatrixMultiply,
    EndCompute,
}

impl Kind {
    pub const ALL: [Kind; 4] = [
        Kind::ReadWeights,
        Kind::StartCompute,
        Kind::MatrixMultiply,
        Kind::EndCompute,
    ];

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Kind::ReadWeights => "rw",
            Kind::StartCompute => "sc",
            Kind::MatrixMultiply => "mm",
            Kind::EndCompute => "ec",
        }
    }

    fn opcode(&self) -> u32 {
        match self {
            Kind::ReadWeights | Kind::MatrixMultiply => OPCODE_RW_MM,
            Kind::StartCompute | Kind::EndCompute => OPCODE_SC_EC,
        }
    }

    fn rd_bit(&self) -> u32 {
        match self {
            Kind::ReadWeights | Kind::StartCompute => 0,
            Kind::MatrixMultiply | Kind::EndCompute => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub kind: Kind,
    pub block: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub func3: u8,
    pub func7: u8,
}

impl Instruction {
    /// Load `64 x regs[rs2]` weight words from SPM address `regs[rs1]`.
    pub fn rw(block: u8, rs1: u8, rs2: u8) -> Self {
        Instruction {
            kind: Kind::ReadWeights,
            block,
            rs1,
            rs2,
            func3: 0,
            func7: 0,
        }
    }

    /// Stream `regs[rs2]` input rows of 64 words from SPM address `regs[rs1]`.
    pub fn mm(block: u8, rs1: u8, rs2: u8) -> Self {
        Instruction {
            kind: Kind::MatrixMultiply,
            block,
            rs1,
            rs2,
            func3: 1,
            func7: 0,
        }
    }

    pub fn sc(block: u8, pattern: FusionPattern, control: ControlWord) -> Result<Self> {
        Ok(Instruction {
            kind: Kind::StartCompute,
            block,
            rs1: 0,
            rs2: 0,
            func3: pattern.index() as u8,
            func7: control.encode()?,
        })
    }

    pub fn ec(block: u8) -> Self {
        Instruction {
            kind: Kind::EndCompute,
            block,
            rs1: 0,
            rs2: 0,
            func3: 0,
            func7: 0,
        }
    }
}

fn check(field: &'static str, value: u8, bits: u32) -> Result<u32> {
    if (value as u32) >> bits != 0 {
        return Err(Error::Encode {
            field,
            value: value as u64,
        });
    }
    Ok(value as u32)
}

pub fn encode(i: &Instruction) -> Result<u32> {
    let block = check("block", i.block, 2)?;
    let rs1 = check("rs1", i.rs1, 5)?;
    let rs2 = check("rs2", i.rs2, 5)?;
    let f3 = check("funct3", i.func3, 3)?;
    let f7 = check("funct7", i.func7, 7)?;
    let rd = (i.kind.rd_bit() << 2) | block;
    Ok(f7 << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | rd << 7 | i.kind.opcode())
}

pub fn decode(word: u32) -> Result<Instruction> {
    let opcode = word & 0x7f;
    let rd = (word >> 7) & 0x1f;
    if rd >> 3 != 0 {
        return Err(Error::Decode {
            field: "rd",
            detail: format!("reserved bits rd[4:3] = {:#b} in {word:#010x}", rd >> 3),
        });
    }
    let kind = match (opcode, rd >> 2) {
        (OPCODE_RW_MM, 0) => Kind::ReadWeights,
        (OPCODE_RW_MM, _) => Kind::MatrixMultiply,
        (OPCODE_SC_EC, 0) => Kind::StartCompute,
        (OPCODE_SC_EC, _) => Kind::EndCompute,
        _ => {
            return Err(Error::Decode {
                field: "opcode",
                detail: format!("unknown opcode {opcode:#09b} in {word:#010x}"),
            })
        }
    };
    Ok(Instruction {
        kind,
        block: (rd & 0b11) as u8,
        rs1: ((word >> 15) & 0x1f) as u8,
        rs2: ((word >> 20) & 0x1f) as u8,
        func3: ((word >> 12) & 0x7) as u8,
        func7: (word >> 25) as u8,
    })
}

/// `funct7` of start compute: bit 0 datatype (0 int, 1 float), bits 1..=3
/// precision selector, bit 4 scheme (0 accumulable, 1 unaccumulable),
/// bits 5..=6 reserved.
///
/// Integer selectors: 0 int8, 1 int4, 2 uint8, 3 uint4, 4 int4x8,
/// 5 int8x4, 6 uint4x8, 7 uint8x4. Float selectors: 0 bf16, 1 fp8a,
/// 2 fp8b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlWord {
    pub mode: MultMode,
    pub scheme: Scheme,
}

const INT_SELECTORS: [&str; 8] = [
    "int8", "int4", "uint8", "uint4", "int4x8", "int8x4", "uint4x8", "uint8x4",
];
const FLOAT_SELECTORS: [&str; 3] = ["bf16", "fp8a", "fp8b"];

impl ControlWord {
    pub fn new(format: DataFormat, scheme: Scheme) -> Self {
        ControlWord {
            mode: MultMode::for_format(format),
            scheme,
        }
    }

    pub fn encode(&self) -> Result<u8> {
        let name = MultMode {
            bias: self.mode.float_format.map_or(0, |f| f.default_bias()),
            ..self.mode
        }
        .to_string();
        let (dt, table): (u8, &[&str]) = match self.mode.datatype {
            Datatype::Int => (0, &INT_SELECTORS),
            Datatype::Float => (1, &FLOAT_SELECTORS),
        };
        let sel = table.iter().position(|s| *s == name).ok_or(Error::Encode {
            field: "funct7",
            value: 0,
        })? as u8;
        let scheme = (self.scheme == Scheme::Unaccumulable) as u8;
        Ok(dt | sel << 1 | scheme << 4)
    }

    pub fn decode(func7: u8) -> Result<Self> {
        if func7 >> 5 != 0 {
            return Err(Error::Decode {
                field: "funct7",
                detail: format!("reserved bits set in {func7:#09b}"),
            });
        }
        let sel = ((func7 >> 1) & 0b111) as usize;
        let name = if func7 & 1 == 0 {
            INT_SELECTORS[sel]
        } else {
            *FLOAT_SELECTORS.get(sel).ok_or_else(|| Error::Decode {
                field: "funct7",
                detail: format!("float precision selector {sel} is undefined"),
            })?
        };
        let scheme = if func7 >> 4 & 1 == 1 {
            Scheme::Unaccumulable
        } else {
            Scheme::Accumulable
        };
        Ok(ControlWord {
            mode: name.parse()?,
            scheme,
        })
    }
}
