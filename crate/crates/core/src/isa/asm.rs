//! Text assembly.
//!
//! ```text
//! rw b0, x1, x2          # weights: base in x1, row count in x2
//! sc b0, h, int8, acc    # pattern, precision, scheme
//! mm b0, x3, x4          # inputs: base in x3, vector count in x4
//! ec b0                  # write outputs to the address in x28
//! ```
//!
//! Fields the canonical form does not cover are written as trailing
//! `f3=`, `f7=`, `rs1=` or `rs2=` operands, and `.word 0x...` emits a raw
//! word, so every 32-bit word survives a disassemble/assemble round trip.

use super::{decode, encode, ControlWord, Instruction, Kind};
use crate::array::{FusionPattern, Scheme};
use crate::error::{Error, Result};

fn asm_err(line: usize, detail: impl Into<String>) -> Error {
    Error::Asm {
        line,
        detail: detail.into(),
    }
}

fn parse_num(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => match s.strip_prefix("0b") {
            Some(b) => u64::from_str_radix(b, 2).ok(),
            None => s.parse().ok(),
        },
    }
}

fn small(line: usize, what: &str, v: u64, bits: u32) -> Result<u8> {
    if v >> bits != 0 {
        return Err(asm_err(
            line,
            format!("{what} value {v} does not fit {bits} bits"),
        ));
    }
    Ok(v as u8)
}

fn parse_reg(line: usize, s: &str) -> Result<u8> {
    let n = s
        .strip_prefix('x')
        .and_then(parse_num)
        .ok_or_else(|| asm_err(line, format!("expected register, got `{s}`")))?;
    small(line, "register", n, 5)
}

fn parse_line(line: usize, text: &str) -> Result<Option<u32>> {
    let text = text.split(['#', ';']).next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (mnemonic, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let ops: Vec<&str> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let mnemonic = mnemonic.to_ascii_lowercase();

    if mnemonic == ".word" {
        let [w] = ops[..] else {
            return Err(asm_err(line, ".word takes one operand"));
        };
        let v = parse_num(w).ok_or_else(|| asm_err(line, format!("bad number `{w}`")))?;
        return u32::try_from(v)
            .map(Some)
            .map_err(|_| asm_err(line, format!("{v:#x} does not fit 32 bits")));
    }

    let kind = Kind::ALL
        .into_iter()
        .find(|k| k.mnemonic() == mnemonic)
        .ok_or_else(|| asm_err(line, format!("unknown mnemonic `{mnemonic}`")))?;
    let (positional, overrides): (Vec<&str>, Vec<&str>) =
        ops.iter().partition(|o| !o.contains('='));
    let block = positional
        .first()
        .and_then(|b| b.strip_prefix('b'))
        .and_then(parse_num)
        .ok_or_else(|| asm_err(line, "expected block operand `b0`..`b3`"))?;
    let block = small(line, "block", block, 2)?;

    let mut ins = match kind {
        Kind::ReadWeights | Kind::MatrixMultiply => {
            let [_, rs1, rs2] = positional[..] else {
                return Err(asm_err(
                    line,
                    format!("`{mnemonic}` takes a block and two registers"),
                ));
            };
            let (rs1, rs2) = (parse_reg(line, rs1)?, parse_reg(line, rs2)?);
            if kind == Kind::ReadWeights {
                Instruction::rw(block, rs1, rs2)
            } else {
                Instruction::mm(block, rs1, rs2)
            }
        }
        Kind::StartCompute => match positional[..] {
            [_] => Instruction {
                kind,
                ..Instruction::ec(block)
            },
            [_, pattern, mode, scheme] => {
                let pattern: FusionPattern = pattern
                    .parse()
                    .map_err(|e: Error| asm_err(line, e.to_string()))?;
                let scheme = match scheme {
                    "acc" => Scheme::Accumulable,
                    "unacc" => Scheme::Unaccumulable,
                    s => {
                        return Err(asm_err(
                            line,
                            format!("scheme must be `acc` or `unacc`, got `{s}`"),
                        ))
                    }
                };
                let control = ControlWord {
                    mode: mode
                        .parse()
                        .map_err(|e: Error| asm_err(line, e.to_string()))?,
                    scheme,
                };
                Instruction::sc(block, pattern, control)
                    .map_err(|e| asm_err(line, e.to_string()))?
            }
            _ => {
                return Err(asm_err(
                    line,
                    "`sc` takes a block, pattern, precision and scheme",
                ))
            }
        },
        Kind::EndCompute => {
            if positional.len() != 1 {
                return Err(asm_err(line, "`ec` takes only a block"));
            }
            Instruction::ec(block)
        }
    };
    for o in overrides {
        let (key, value) = o.split_once('=').expect("partitioned on `=`");
        let v =
            parse_num(value.trim()).ok_or_else(|| asm_err(line, format!("bad number in `{o}`")))?;
        match key.trim() {
            "f3" => ins.func3 = small(line, "f3", v, 3)?,
            "f7" => ins.func7 = small(line, "f7", v, 7)?,
            "rs1" => ins.rs1 = small(line, "rs1", v, 5)?,
            "rs2" => ins.rs2 = small(line, "rs2", v, 5)?,
            k => return Err(asm_err(line, format!("unknown field `{k}`"))),
        }
    }
    encode(&ins)
        .map(Some)
        .map_err(|e| asm_err(line, e.to_string()))
}

/// Assemble source text into instruction words.
pub fn assemble(src: &str) -> Result<Vec<u32>> {
    let mut out = vec![];
    for (n, line) in src.lines().enumerate() {
        if let Some(w) = parse_line(n + 1, line)? {
            out.push(w);
        }
    }
    Ok(out)
}

fn render(i: &Instruction) -> String {
    let mut s = format!("{} b{}", i.kind.mnemonic(), i.block);
    let mut extra = vec![];
    let canonical = match i.kind {
        Kind::ReadWeights => Instruction::rw(i.block, i.rs1, i.rs2),
        Kind::MatrixMultiply => Instruction::mm(i.block, i.rs1, i.rs2),
        Kind::StartCompute => {
            let decoded = FusionPattern::from_index(i.func3 as u32)
                .ok()
                .zip(ControlWord::decode(i.func7).ok());
            match decoded {
                Some((p, c)) => {
                    let scheme = match c.scheme {
                        Scheme::Accumulable => "acc",
                        Scheme::Unaccumulable => "unacc",
                    };
                    s += &format!(", {p}, {}, {scheme}", c.mode);
                    Instruction::sc(i.block, p, c).expect("decoded control re-encodes")
                }
                None => Instruction {
                    kind: Kind::StartCompute,
                    ..Instruction::ec(i.block)
                },
            }
        }
        Kind::EndCompute => Instruction::ec(i.block),
    };
    if matches!(i.kind, Kind::ReadWeights | Kind::MatrixMultiply) {
        s += &format!(", x{}, x{}", i.rs1, i.rs2);
    } else {
        if i.rs1 != canonical.rs1 {
            extra.push(format!("rs1={}", i.rs1));
        }
        if i.rs2 != canonical.rs2 {
            extra.push(format!("rs2={}", i.rs2));
        }
    }
    if i.func3 != canonical.func3 {
        extra.push(format!("f3={}", i.func3));
    }
    if i.func7 != canonical.func7 {
        extra.push(format!("f7={:#x}", i.func7));
    }
    for e in extra {
        s += ", ";
        s += &e;
    }
    s
}

/// One line per word; words that do not decode become `.word` lines.
pub fn disassemble(words: &[u32]) -> String {
    let mut out = String::new();
    for &w in words {
        match decode(w) {
            Ok(i) => out += &render(&i),
            Err(_) => out += &format!(".word {w:#010x}"),
        }
        out.push('\n');
    }
    out
}

/// Little-endian binary image of a program.
pub fn to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Decode {
            field: "program",
            detail: format!("{} bytes is not a whole number of words", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect())
}
