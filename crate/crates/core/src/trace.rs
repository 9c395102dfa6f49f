//! Symbolic traces and the lowering pipeline that prepares them for the
//! solver: desugar, simplify, trim and SSA conversion, in that order.

use std::collections::HashMap;
use std::fmt;

use crate::Word;

/// A storage location named by a trace operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    /// General-purpose register `0..=31`.
    Gpr(u8),
    Hi,
    Lo,
    /// 64-bit product temporary introduced by desugaring.
    Tmp,
}

impl Loc {
    pub const ZERO: Loc = Loc::Gpr(0);

    /// Bit width of values stored at this location.
    pub fn width(self) -> u32 {
        match self {
            Loc::Tmp => 64,
            _ => 32,
        }
    }
}

/// A trace operand: a location plus an SSA version. Raw traces use
/// version 0 everywhere; `$0` keeps version 0 even after SSA conversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub loc: Loc,
    pub version: u32,
}

impl Var {
    pub fn gpr(index: u8) -> Var {
        Var { loc: Loc::Gpr(index), version: 0 }
    }

    pub fn hi() -> Var {
        Var { loc: Loc::Hi, version: 0 }
    }

    pub fn lo() -> Var {
        Var { loc: Loc::Lo, version: 0 }
    }

    pub fn tmp() -> Var {
        Var { loc: Loc::Tmp, version: 0 }
    }

    pub fn at(self, version: u32) -> Var {
        Var { version, ..self }
    }

    pub fn is_zero(self) -> bool {
        self.loc == Loc::ZERO
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.loc {
            Loc::Gpr(i) => write!(f, "${i}")?,
            Loc::Hi => write!(f, "hi")?,
            Loc::Lo => write!(f, "lo")?,
            Loc::Tmp => write!(f, "tmp")?,
        }
        if self.version > 0 {
            write!(f, "_{}", self.version)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Ne,
}

impl Rel {
    pub fn negate(self) -> Rel {
        match self {
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
        }
    }
}

/// One entry of a symbolic trace: an assignment or a path condition.
///
/// `Lw`/`Sw` carry a memory version: the version read by a load, or the
/// version defined by a store (which reads `mem - 1`). Raw traces use 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymInstr {
    Add {
        d: Var,
        s: Var,
        t: Var,
    },
    Sub {
        d: Var,
        s: Var,
        t: Var,
    },
    Mult {
        s: Var,
        t: Var,
    },
    Multu {
        s: Var,
        t: Var,
    },
    Div {
        s: Var,
        t: Var,
    },
    Divu {
        s: Var,
        t: Var,
    },
    Mfhi {
        d: Var,
    },
    Mflo {
        d: Var,
    },
    Slt {
        d: Var,
        s: Var,
        t: Var,
    },
    Sltu {
        d: Var,
        s: Var,
        t: Var,
    },
    Const {
        d: Var,
        value: Word,
    },
    Lw {
        t: Var,
        offset: i16,
        s: Var,
        mem: u32,
    },
    Sw {
        t: Var,
        offset: i16,
        s: Var,
        mem: u32,
    },
    /// Link-register write of `jalr`, with the concretized return address.
    Jalr {
        return_pc: Word,
    },
    /// Branch outcome recorded at the branch instruction at byte address `site`.
    PathCond {
        rel: Rel,
        a: Var,
        b: Var,
        site: Word,
    },
    Mult64 {
        tmp: Var,
        s: Var,
        t: Var,
        signed: bool,
    },
    Low32 {
        d: Var,
        tmp: Var,
    },
    High32 {
        d: Var,
        tmp: Var,
    },
    Quot {
        d: Var,
        s: Var,
        t: Var,
        signed: bool,
    },
    Rem {
        d: Var,
        s: Var,
        t: Var,
        signed: bool,
    },
}

impl SymInstr {
    pub fn is_path_cond(&self) -> bool {
        matches!(self, SymInstr::PathCond { .. })
    }

    /// True for forms that only appear before desugaring.
    pub fn is_raw_only(&self) -> bool {
        use SymInstr::*;
        matches!(
            self,
            Mult { .. } | Multu { .. } | Div { .. } | Divu { .. } | Mfhi { .. } | Mflo { .. } | Jalr { .. }
        )
    }

    /// True for forms that only appear after desugaring.
    pub fn is_desugared_only(&self) -> bool {
        use SymInstr::*;
        matches!(self, Mult64 { .. } | Low32 { .. } | High32 { .. } | Quot { .. } | Rem { .. })
    }

    /// Register-like variable written by this instruction, if any.
    pub fn def(&self) -> Option<Var> {
        use SymInstr::*;
        match *self {
            Add { d, .. } | Sub { d, .. } | Slt { d, .. } | Sltu { d, .. } | Const { d, .. } => Some(d),
            Mfhi { d } | Mflo { d } | Low32 { d, .. } | High32 { d, .. } => Some(d),
            Quot { d, .. } | Rem { d, .. } => Some(d),
            Lw { t, .. } => Some(t),
            Mult64 { tmp, .. } => Some(tmp),
            Sw { .. } | Mult { .. } | Multu { .. } | Div { .. } | Divu { .. } => None,
            Jalr { .. } | PathCond { .. } => None,
        }
    }

    /// Register-like variables read by this instruction.
    pub fn uses(&self) -> Vec<Var> {
        use SymInstr::*;
        match *self {
            Add { s, t, .. } | Sub { s, t, .. } | Slt { s, t, .. } | Sltu { s, t, .. } => vec![s, t],
            Mult { s, t } | Multu { s, t } | Div { s, t } | Divu { s, t } => vec![s, t],
            Mult64 { s, t, .. } | Quot { s, t, .. } | Rem { s, t, .. } => vec![s, t],
            Mfhi { .. } => vec![Var::hi()],
            Mflo { .. } => vec![Var::lo()],
            Low32 { tmp, .. } | High32 { tmp, .. } => vec![tmp],
            Lw { s, .. } => vec![s],
            Sw { t, s, .. } => vec![t, s],
            PathCond { a, b, .. } => vec![a, b],
            Const { .. } | Jalr { .. } => vec![],
        }
    }
}

impl fmt::Display for SymInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SymInstr::*;
        let sign = |signed: bool| if signed { "" } else { "u" };
        match *self {
            Add { d, s, t } => write!(f, "add {d}, {s}, {t}"),
            Sub { d, s, t } => write!(f, "sub {d}, {s}, {t}"),
            Slt { d, s, t } => write!(f, "slt {d}, {s}, {t}"),
            Sltu { d, s, t } => write!(f, "sltu {d}, {s}, {t}"),
            Mult { s, t } => write!(f, "mult {s}, {t}"),
            Multu { s, t } => write!(f, "multu {s}, {t}"),
            Div { s, t } => write!(f, "div {s}, {t}"),
            Divu { s, t } => write!(f, "divu {s}, {t}"),
            Mfhi { d } => write!(f, "mfhi {d}"),
            Mflo { d } => write!(f, "mflo {d}"),
            Const { d, value } => write!(f, "const {d}, {value:#x}"),
            Lw { t, offset, s, mem } => write!(f, "lw {t}, {offset}({s}) [mem_{mem}]"),
            Sw { t, offset, s, mem } => write!(f, "sw {t}, {offset}({s}) [mem_{mem}]"),
            Jalr { return_pc } => write!(f, "jalr -> {return_pc:#x}"),
            PathCond { rel, a, b, .. } => match rel {
                Rel::Eq => write!(f, "{a} == {b}"),
                Rel::Ne => write!(f, "{a} != {b}"),
            },
            Mult64 { tmp, s, t, signed } => write!(f, "mult64{} {tmp}, {s}, {t}", sign(signed)),
            Low32 { d, tmp } => write!(f, "low32 {d}, {tmp}"),
            High32 { d, tmp } => write!(f, "high32 {d}, {tmp}"),
            Quot { d, s, t, signed } => write!(f, "quot{} {d}, {s}, {t}", sign(signed)),
            Rem { d, s, t, signed } => write!(f, "rem{} {d}, {s}, {t}", sign(signed)),
        }
    }
}

/// An ordered symbolic record of one execution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub instrs: Vec<SymInstr>,
    pub ssa: bool,
}

impl Trace {
    pub fn raw(instrs: Vec<SymInstr>) -> Trace {
        Trace { instrs, ssa: false }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn path_cond_count(&self) -> usize {
        self.instrs.iter().filter(|i| i.is_path_cond()).count()
    }

    pub fn path_conds(&self) -> impl Iterator<Item = &SymInstr> {
        self.instrs.iter().filter(|i| i.is_path_cond())
    }

    /// Verify the SSA discipline: every variable is defined at most once
    /// and every use names the latest version defined so far (version 1
    /// for a location that has not been touched yet).
    pub fn check_ssa(&self) -> Result<(), String> {
        let mut current: HashMap<Loc, u32> = HashMap::new();
        let mut mem = 0u32;
        for (pos, instr) in self.instrs.iter().enumerate() {
            if instr.is_raw_only() {
                return Err(format!("#{pos}: raw form `{instr}` in SSA trace"));
            }
            for used in instr.uses() {
                if used.is_zero() {
                    if used.version != 0 {
                        return Err(format!("#{pos}: $0 must not be versioned"));
                    }
                    continue;
                }
                let latest = current.entry(used.loc).or_insert(1);
                if used.version != *latest {
                    return Err(format!("#{pos}: use of {used}, latest is version {latest}"));
                }
            }
            match *instr {
                SymInstr::Lw { mem: m, .. } => {
                    mem = mem.max(1);
                    if m != mem {
                        return Err(format!("#{pos}: load from mem_{m}, latest is mem_{mem}"));
                    }
                }
                SymInstr::Sw { mem: m, .. } => {
                    mem = mem.max(1);
                    if m != mem + 1 {
                        return Err(format!("#{pos}: store defines mem_{m}, expected mem_{}", mem + 1));
                    }
                    mem = m;
                }
                _ => {}
            }
            if let Some(defined) = instr.def() {
                if defined.is_zero() {
                    return Err(format!("#{pos}: assignment to $0"));
                }
                let next = current.get(&defined.loc).map_or(1, |v| v + 1);
                if defined.version != next {
                    return Err(format!("#{pos}: defines {defined}, expected version {next}"));
                }
                current.insert(defined.loc, next);
            }
        }
        Ok(())
    }
}

impl fmt::Display for Trace {
    /// One instruction per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for instr in &self.instrs {
            writeln!(f, "{instr}")?;
        }
        Ok(())
    }
}

/// Replace instructions with several effects (or with implicit operands)
/// by simpler ones the formula translation understands directly.
pub fn desugar(t: &Trace) -> Trace {
    use SymInstr::*;
    let mut out = Vec::with_capacity(t.instrs.len());
    for &instr in &t.instrs {
        match instr {
            Mult { s, t } | Multu { s, t } => {
                let signed = matches!(instr, Mult { .. });
                out.push(Mult64 { tmp: Var::tmp(), s, t, signed });
                out.push(Low32 { d: Var::lo(), tmp: Var::tmp() });
                out.push(High32 { d: Var::hi(), tmp: Var::tmp() });
            }
            Div { s, t } | Divu { s, t } => {
                let signed = matches!(instr, Div { .. });
                out.push(Quot { d: Var::lo(), s, t, signed });
                out.push(Rem { d: Var::hi(), s, t, signed });
            }
            Mfhi { d } => out.push(Add { d, s: Var::hi(), t: Var::gpr(0) }),
            Mflo { d } => out.push(Add { d, s: Var::lo(), t: Var::gpr(0) }),
            Jalr { return_pc } => out.push(Const { d: Var::gpr(31), value: return_pc }),
            other => out.push(other),
        }
    }
    Trace { instrs: out, ssa: t.ssa }
}

/// Drop path conditions whose truth is syntactically forced, and writes to
/// `$0`.
pub fn simplify(t: &Trace) -> Trace {
    let instrs = t
        .instrs
        .iter()
        .filter(|instr| !matches!(instr, SymInstr::PathCond { a, b, .. } if a == b))
        .filter(|instr| !instr.def().is_some_and(Var::is_zero))
        .copied()
        .collect();
    Trace { instrs, ssa: t.ssa }
}

/// Longest prefix with at most `depth` path conditions.
pub fn trim(t: &Trace, depth: usize) -> Trace {
    let mut seen = 0;
    let end = t
        .instrs
        .iter()
        .position(|instr| {
            if instr.is_path_cond() {
                seen += 1;
            }
            seen > depth
        })
        .unwrap_or(t.instrs.len());
    Trace { instrs: t.instrs[..end].to_vec(), ssa: t.ssa }
}

/// Linear-pass SSA conversion.
///
/// Every location starts at version 1 when first read; each definition
/// mints the next version, so a location written before it is ever read
/// gets version 1 for its first write. Stores mint a new memory version
/// from the latest one and loads read the latest. Existing versions on the
/// input are ignored, which makes the pass idempotent.
pub fn ssa_convert(t: &Trace) -> Trace {
    let mut versions = Versions::default();
    let instrs = t.instrs.iter().map(|instr| versions.convert(instr)).collect();
    Trace { instrs, ssa: true }
}

#[derive(Default)]
struct Versions {
    last: HashMap<Loc, u32>,
    mem: u32,
}

impl Versions {
    fn read(&mut self, v: Var) -> Var {
        if v.is_zero() {
            return v.at(0);
        }
        let version = *self.last.entry(v.loc).or_insert(1);
        v.at(version)
    }

    fn write(&mut self, v: Var) -> Var {
        if v.is_zero() {
            return v.at(0);
        }
        let next = self.last.get(&v.loc).map_or(1, |n| n + 1);
        self.last.insert(v.loc, next);
        v.at(next)
    }

    fn convert(&mut self, instr: &SymInstr) -> SymInstr {
        use SymInstr::*;
        // Operands are read before the destination is redefined.
        match *instr {
            Add { d, s, t } => {
                let (s, t) = (self.read(s), self.read(t));
                Add { d: self.write(d), s, t }
            }
            Sub { d, s, t } => {
                let (s, t) = (self.read(s), self.read(t));
                Sub { d: self.write(d), s, t }
            }
            Slt { d, s, t } => {
                let (s, t) = (self.read(s), self.read(t));
                Slt { d: self.write(d), s, t }
            }
            Sltu { d, s, t } => {
                let (s, t) = (self.read(s), self.read(t));
                Sltu { d: self.write(d), s, t }
            }
            Const { d, value } => Const { d: self.write(d), value },
            Lw { t, offset, s, .. } => {
                let s = self.read(s);
                self.mem = self.mem.max(1);
                let mem = self.mem;
                Lw { t: self.write(t), offset, s, mem }
            }
            Sw { t, offset, s, .. } => {
                let (t, s) = (self.read(t), self.read(s));
                self.mem = self.mem.max(1) + 1;
                Sw { t, offset, s, mem: self.mem }
            }
            PathCond { rel, a, b, site } => {
                let (a, b) = (self.read(a), self.read(b));
                PathCond { rel, a, b, site }
            }
            Mult64 { tmp, s, t, signed } => {
                let (s, t) = (self.read(s), self.read(t));
                Mult64 { tmp: self.write(tmp), s, t, signed }
            }
            Low32 { d, tmp } => {
                let tmp = self.read(tmp);
                Low32 { d: self.write(d), tmp }
            }
            High32 { d, tmp } => {
                let tmp = self.read(tmp);
                High32 { d: self.write(d), tmp }
            }
            Quot { d, s, t, signed } => {
                let (s, t) = (self.read(s), self.read(t));
                Quot { d: self.write(d), s, t, signed }
            }
            Rem { d, s, t, signed } => {
                let (s, t) = (self.read(s), self.read(t));
                Rem { d: self.write(d), s, t, signed }
            }
            // Raw forms survive only if the caller skipped desugaring; they
            // are versioned anyway so the checker can point at them.
            Mult { s, t } => Mult { s: self.read(s), t: self.read(t) },
            Multu { s, t } => Multu { s: self.read(s), t: self.read(t) },
            Div { s, t } => Div { s: self.read(s), t: self.read(t) },
            Divu { s, t } => Divu { s: self.read(s), t: self.read(t) },
            Mfhi { d } => Mfhi { d: self.write(d) },
            Mflo { d } => Mflo { d: self.write(d) },
            Jalr { return_pc } => Jalr { return_pc },
        }
    }
}

/// The full lowering pipeline: desugar, simplify, trim to `depth` path
/// conditions, then SSA-convert.
pub fn transform(t: &Trace, depth: usize) -> Trace {
    ssa_convert(&trim(&simplify(&desugar(t)), depth))
}
