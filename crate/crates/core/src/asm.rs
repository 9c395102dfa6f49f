//! Assembler and decoder for the supported MIPS subset.
//!
//! Source format: one instruction or directive per line, lowercase
//! mnemonics, registers `$0`..`$31`, `#` comments, `name:` labels either on
//! their own line or in front of an instruction. Data words are written as
//! `.word <int|hex|label>` or as a bare integer on its own line. Loads and
//! stores accept both `lw $t, i($s)` and `lw $t, i, $s`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::Word;

/// A general-purpose register index in `0..=31`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(31);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn field(self) -> u32 {
        self.0 as u32
    }

    fn from_field(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.0)
    }
}

/// One decoded instruction of the subset, or a raw data word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instruction {
    Add {
        d: Reg,
        s: Reg,
        t: Reg,
    },
    Sub {
        d: Reg,
        s: Reg,
        t: Reg,
    },
    Mult {
        s: Reg,
        t: Reg,
    },
    Multu {
        s: Reg,
        t: Reg,
    },
    Div {
        s: Reg,
        t: Reg,
    },
    Divu {
        s: Reg,
        t: Reg,
    },
    Mfhi {
        d: Reg,
    },
    Mflo {
        d: Reg,
    },
    /// Load the following word into `d` and skip it.
    Lis {
        d: Reg,
    },
    Slt {
        d: Reg,
        s: Reg,
        t: Reg,
    },
    Sltu {
        d: Reg,
        s: Reg,
        t: Reg,
    },
    Jr {
        s: Reg,
    },
    Jalr {
        s: Reg,
    },
    /// `offset` counts words relative to the instruction after the branch.
    Beq {
        s: Reg,
        t: Reg,
        offset: i16,
    },
    Bne {
        s: Reg,
        t: Reg,
        offset: i16,
    },
    Lw {
        t: Reg,
        offset: i16,
        s: Reg,
    },
    Sw {
        t: Reg,
        offset: i16,
        s: Reg,
    },
    RawWord(Word),
}

const FUNCT_JR: u32 = 0x08;
const FUNCT_JALR: u32 = 0x09;
const FUNCT_MFHI: u32 = 0x10;
const FUNCT_MFLO: u32 = 0x12;
const FUNCT_LIS: u32 = 0x14;
const FUNCT_MULT: u32 = 0x18;
const FUNCT_MULTU: u32 = 0x19;
const FUNCT_DIV: u32 = 0x1a;
const FUNCT_DIVU: u32 = 0x1b;
const FUNCT_ADD: u32 = 0x20;
const FUNCT_SUB: u32 = 0x22;
const FUNCT_SLT: u32 = 0x2a;
const FUNCT_SLTU: u32 = 0x2b;

const OP_BEQ: u32 = 0x04;
const OP_BNE: u32 = 0x05;
const OP_LW: u32 = 0x23;
const OP_SW: u32 = 0x2b;

fn r_type(s: Reg, t: Reg, d: Reg, funct: u32) -> Word {
    (s.field() << 21) | (t.field() << 16) | (d.field() << 11) | funct
}

fn i_type(op: u32, s: Reg, t: Reg, imm: i16) -> Word {
    (op << 26) | (s.field() << 21) | (t.field() << 16) | (imm as u16 as u32)
}

impl Instruction {
    /// Standard MIPS-I R/I encoding. `lis` uses funct 0x14 with the target
    /// in the `rd` field; `jalr $s` links through `$31`.
    pub fn encode(&self) -> Word {
        use Instruction::*;
        let z = Reg::ZERO;
        match *self {
            Add { d, s, t } => r_type(s, t, d, FUNCT_ADD),
            Sub { d, s, t } => r_type(s, t, d, FUNCT_SUB),
            Slt { d, s, t } => r_type(s, t, d, FUNCT_SLT),
            Sltu { d, s, t } => r_type(s, t, d, FUNCT_SLTU),
            Mult { s, t } => r_type(s, t, z, FUNCT_MULT),
            Multu { s, t } => r_type(s, t, z, FUNCT_MULTU),
            Div { s, t } => r_type(s, t, z, FUNCT_DIV),
            Divu { s, t } => r_type(s, t, z, FUNCT_DIVU),
            Mfhi { d } => r_type(z, z, d, FUNCT_MFHI),
            Mflo { d } => r_type(z, z, d, FUNCT_MFLO),
            Lis { d } => r_type(z, z, d, FUNCT_LIS),
            Jr { s } => r_type(s, z, z, FUNCT_JR),
            Jalr { s } => r_type(s, z, Reg::RA, FUNCT_JALR),
            Beq { s, t, offset } => i_type(OP_BEQ, s, t, offset),
            Bne { s, t, offset } => i_type(OP_BNE, s, t, offset),
            Lw { t, offset, s } => i_type(OP_LW, s, t, offset),
            Sw { t, offset, s } => i_type(OP_SW, s, t, offset),
            RawWord(w) => w,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        use Instruction::*;
        match self {
            Add { .. } => "add",
            Sub { .. } => "sub",
            Mult { .. } => "mult",
            Multu { .. } => "multu",
            Div { .. } => "div",
            Divu { .. } => "divu",
            Mfhi { .. } => "mfhi",
            Mflo { .. } => "mflo",
            Lis { .. } => "lis",
            Slt { .. } => "slt",
            Sltu { .. } => "sltu",
            Jr { .. } => "jr",
            Jalr { .. } => "jalr",
            Beq { .. } => "beq",
            Bne { .. } => "bne",
            Lw { .. } => "lw",
            Sw { .. } => "sw",
            RawWord(_) => ".word",
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        let m = self.mnemonic();
        match *self {
            Add { d, s, t } | Sub { d, s, t } | Slt { d, s, t } | Sltu { d, s, t } => {
                write!(f, "{m} {d}, {s}, {t}")
            }
            Mult { s, t } | Multu { s, t } | Div { s, t } | Divu { s, t } => {
                write!(f, "{m} {s}, {t}")
            }
            Mfhi { d } | Mflo { d } | Lis { d } => write!(f, "{m} {d}"),
            Jr { s } | Jalr { s } => write!(f, "{m} {s}"),
            Beq { s, t, offset } | Bne { s, t, offset } => write!(f, "{m} {s}, {t}, {offset}"),
            Lw { t, offset, s } | Sw { t, offset, s } => write!(f, "{m} {t}, {offset}({s})"),
            RawWord(w) => write!(f, ".word {w:#010x}"),
        }
    }
}

/// Decode a word. Anything that is not exactly the encoding of a subset
/// instruction (including all-zero `sll $0, $0, 0`) comes back as
/// [`Instruction::RawWord`].
pub fn decode(w: Word) -> Instruction {
    use Instruction::*;
    let s = Reg::from_field(w >> 21);
    let t = Reg::from_field(w >> 16);
    let d = Reg::from_field(w >> 11);
    let imm = (w & 0xffff) as u16 as i16;
    let candidate = match w >> 26 {
        0 => match w & 0x3f {
            FUNCT_ADD => Add { d, s, t },
            FUNCT_SUB => Sub { d, s, t },
            FUNCT_SLT => Slt { d, s, t },
            FUNCT_SLTU => Sltu { d, s, t },
            FUNCT_MULT => Mult { s, t },
            FUNCT_MULTU => Multu { s, t },
            FUNCT_DIV => Div { s, t },
            FUNCT_DIVU => Divu { s, t },
            FUNCT_MFHI => Mfhi { d },
            FUNCT_MFLO => Mflo { d },
            FUNCT_LIS => Lis { d },
            FUNCT_JR => Jr { s },
            FUNCT_JALR => Jalr { s },
            _ => return RawWord(w),
        },
        OP_BEQ => Beq { s, t, offset: imm },
        OP_BNE => Bne { s, t, offset: imm },
        OP_LW => Lw { t, offset: imm, s },
        OP_SW => Sw { t, offset: imm, s },
        _ => return RawWord(w),
    };
    // Reject words whose unused fields are not zero.
    if candidate.encode() == w {
        candidate
    } else {
        RawWord(w)
    }
}

/// Assembly source text plus where it came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceProgram {
    pub origin: String,
    pub text: String,
}

impl SourceProgram {
    pub fn inline(text: impl Into<String>) -> Self {
        SourceProgram { origin: "<inline>".to_string(), text: text.into() }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        Ok(SourceProgram { origin: path.display().to_string(), text: std::fs::read_to_string(path)? })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AsmError {
    #[error("{origin}:{line}: undefined label `{label}`")]
    UndefinedLabel { origin: String, line: usize, label: String },
    #[error("{origin}:{line}: duplicate label `{label}`")]
    DuplicateLabel { origin: String, line: usize, label: String },
    #[error("{origin}:{line}: immediate {value} out of range")]
    ImmediateOutOfRange { origin: String, line: usize, value: i64 },
    #[error("{origin}:{line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { origin: String, line: usize, mnemonic: String },
    #[error("{origin}:{line}: {message}")]
    Syntax { origin: String, line: usize, message: String },
}

/// Line-level failure, tagged with origin and line number by the caller.
enum LineError {
    UndefinedLabel(String),
    ImmediateOutOfRange(i64),
    UnknownMnemonic(String),
    Syntax(String),
}

impl LineError {
    fn at(self, origin: &str, line: usize) -> AsmError {
        let origin = origin.to_string();
        match self {
            LineError::UndefinedLabel(label) => AsmError::UndefinedLabel { origin, line, label },
            LineError::ImmediateOutOfRange(value) => AsmError::ImmediateOutOfRange { origin, line, value },
            LineError::UnknownMnemonic(mnemonic) => AsmError::UnknownMnemonic { origin, line, mnemonic },
            LineError::Syntax(message) => AsmError::Syntax { origin, line, message },
        }
    }
}

struct Statement<'a> {
    line: usize,
    address: Word,
    mnemonic: &'a str,
    operands: Vec<&'a str>,
}

/// Assemble a program into words, loaded at address 0.
pub fn assemble(source: &SourceProgram) -> Result<Vec<Word>, AsmError> {
    let origin = source.origin.as_str();
    let mut labels: HashMap<&str, Word> = HashMap::new();
    let mut statements = Vec::new();
    let mut address: Word = 0;

    for (idx, raw) in source.text.lines().enumerate() {
        let line = idx + 1;
        let mut rest = raw.split('#').next().unwrap_or("").trim();
        while let Some(colon) = rest.find(':') {
            let name = rest[..colon].trim();
            if !is_identifier(name) {
                return Err(LineError::Syntax(format!("invalid label `{name}`")).at(origin, line));
            }
            if labels.insert(name, address).is_some() {
                return Err(AsmError::DuplicateLabel {
                    origin: origin.to_string(),
                    line,
                    label: name.to_string(),
                });
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let (mnemonic, operand_text) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], rest[i..].trim()),
            None => (rest, ""),
        };
        let operands = split_operands(operand_text);
        statements.push(Statement { line, address, mnemonic, operands });
        address = address.wrapping_add(4);
    }

    statements.iter().map(|st| encode_statement(st, &labels).map_err(|e| e.at(origin, st.line))).collect()
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `a, b, c` and `t, i($s)` into flat operand lists; the
/// parenthesized base register becomes its own operand.
fn split_operands(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            out.push(piece);
            continue;
        }
        match (piece.find('('), piece.strip_suffix(')')) {
            (Some(open), Some(inner)) => {
                let offset = piece[..open].trim();
                out.push(if offset.is_empty() { "0" } else { offset });
                out.push(inner[open + 1..].trim());
            }
            _ => out.push(piece),
        }
    }
    if text.trim().is_empty() {
        out.clear();
    }
    out
}

fn parse_int(text: &str) -> Option<i64> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if negative { -magnitude } else { magnitude })
}

fn parse_reg(text: &str) -> Result<Reg, LineError> {
    let body = text
        .strip_prefix('$')
        .ok_or_else(|| LineError::Syntax(format!("expected a register like `$4`, found `{text}`")))?;
    body.parse::<u8>()
        .ok()
        .and_then(Reg::new)
        .ok_or_else(|| LineError::Syntax(format!("invalid register `{text}`")))
}

fn parse_imm16(text: &str) -> Result<i16, LineError> {
    let value =
        parse_int(text).ok_or_else(|| LineError::Syntax(format!("expected an integer, found `{text}`")))?;
    i16::try_from(value).map_err(|_| LineError::ImmediateOutOfRange(value))
}

fn parse_data_word(text: &str, labels: &HashMap<&str, Word>) -> Result<Word, LineError> {
    if let Some(value) = parse_int(text) {
        if !(i32::MIN as i64..=u32::MAX as i64).contains(&value) {
            return Err(LineError::ImmediateOutOfRange(value));
        }
        return Ok(value as u32);
    }
    if is_identifier(text) {
        return labels.get(text).copied().ok_or_else(|| LineError::UndefinedLabel(text.to_string()));
    }
    Err(LineError::Syntax(format!("invalid data word `{text}`")))
}

fn branch_offset(text: &str, branch_address: Word, labels: &HashMap<&str, Word>) -> Result<i16, LineError> {
    if parse_int(text).is_some() {
        return parse_imm16(text);
    }
    if !is_identifier(text) {
        return Err(LineError::Syntax(format!("invalid branch target `{text}`")));
    }
    let target = *labels.get(text).ok_or_else(|| LineError::UndefinedLabel(text.to_string()))?;
    let delta = (target as i64 - (branch_address as i64 + 4)) / 4;
    i16::try_from(delta).map_err(|_| LineError::ImmediateOutOfRange(delta))
}

fn expect_operands(st: &Statement, n: usize) -> Result<(), LineError> {
    if st.operands.len() == n {
        Ok(())
    } else {
        Err(LineError::Syntax(format!("`{}` takes {n} operand(s), found {}", st.mnemonic, st.operands.len())))
    }
}

fn encode_statement(st: &Statement, labels: &HashMap<&str, Word>) -> Result<Word, LineError> {
    use Instruction::*;
    let ops = &st.operands;
    let three = |f: fn(Reg, Reg, Reg) -> Instruction| -> Result<Instruction, LineError> {
        expect_operands(st, 3)?;
        Ok(f(parse_reg(ops[0])?, parse_reg(ops[1])?, parse_reg(ops[2])?))
    };
    let two = |f: fn(Reg, Reg) -> Instruction| -> Result<Instruction, LineError> {
        expect_operands(st, 2)?;
        Ok(f(parse_reg(ops[0])?, parse_reg(ops[1])?))
    };
    let one = |f: fn(Reg) -> Instruction| -> Result<Instruction, LineError> {
        expect_operands(st, 1)?;
        Ok(f(parse_reg(ops[0])?))
    };
    let branch = |f: fn(Reg, Reg, i16) -> Instruction| -> Result<Instruction, LineError> {
        expect_operands(st, 3)?;
        let s = parse_reg(ops[0])?;
        let t = parse_reg(ops[1])?;
        Ok(f(s, t, branch_offset(ops[2], st.address, labels)?))
    };
    let memory = |f: fn(Reg, i16, Reg) -> Instruction| -> Result<Instruction, LineError> {
        expect_operands(st, 3)?;
        Ok(f(parse_reg(ops[0])?, parse_imm16(ops[1])?, parse_reg(ops[2])?))
    };

    let instr = match st.mnemonic {
        "add" => three(|d, s, t| Add { d, s, t })?,
        "sub" => three(|d, s, t| Sub { d, s, t })?,
        "slt" => three(|d, s, t| Slt { d, s, t })?,
        "sltu" => three(|d, s, t| Sltu { d, s, t })?,
        "mult" => two(|s, t| Mult { s, t })?,
        "multu" => two(|s, t| Multu { s, t })?,
        "div" => two(|s, t| Div { s, t })?,
        "divu" => two(|s, t| Divu { s, t })?,
        "mfhi" => one(|d| Mfhi { d })?,
        "mflo" => one(|d| Mflo { d })?,
        "lis" => one(|d| Lis { d })?,
        "jr" => one(|s| Jr { s })?,
        "jalr" => one(|s| Jalr { s })?,
        "beq" => branch(|s, t, offset| Beq { s, t, offset })?,
        "bne" => branch(|s, t, offset| Bne { s, t, offset })?,
        "lw" => memory(|t, offset, s| Lw { t, offset, s })?,
        "sw" => memory(|t, offset, s| Sw { t, offset, s })?,
        ".word" => {
            expect_operands(st, 1)?;
            RawWord(parse_data_word(ops[0], labels)?)
        }
        other if parse_int(other).is_some() && ops.is_empty() => RawWord(parse_data_word(other, labels)?),
        other => return Err(LineError::UnknownMnemonic(other.to_string())),
    };
    Ok(instr.encode())
}
