//! Instrumented emulator: executes programs concretely and records a raw
//! symbolic trace of every executed instruction.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::asm::{decode, Instruction, Reg};
use crate::trace::{Rel, SymInstr, Trace, Var};
use crate::Word;

/// Initial `$31`. Jumping here ends the run.
pub const TERMINATION_PC: Word = 0x8123_456C;

pub const DEFAULT_MEM_SIZE: u32 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    DivideByZero,
    UnalignedAccess,
    OutOfBoundsAccess,
    InvalidInstruction,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::DivideByZero => "divide by zero",
            ErrorKind::UnalignedAccess => "unaligned memory access",
            ErrorKind::OutOfBoundsAccess => "out-of-bounds memory access",
            ErrorKind::InvalidInstruction => "invalid instruction",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [Word; 32],
    pub hi: Word,
    pub lo: Word,
    /// Byte address of the next instruction.
    pub pc: Word,
    /// Sparse memory keyed by word-aligned byte address; absent cells are 0.
    pub mem: HashMap<Word, Word>,
    pub mem_size: u32,
    /// Byte address one past the loaded program. Falling through to it ends
    /// the run just like returning to [`TERMINATION_PC`].
    pub program_end: Word,
}

impl MachineState {
    /// Load `prog` at address 0 and set up the calling convention: inputs in
    /// `$1`/`$2`, stack pointer `$30` at the top of memory, `$31` holding
    /// the termination address.
    pub fn load(prog: &[Word], r1: Word, r2: Word, mem_size: u32) -> MachineState {
        let mut regs = [0; 32];
        regs[1] = r1;
        regs[2] = r2;
        regs[30] = mem_size;
        regs[31] = TERMINATION_PC;
        let mem =
            prog.iter().enumerate().filter(|(_, w)| **w != 0).map(|(i, w)| ((i as Word) * 4, *w)).collect();
        MachineState {
            regs,
            hi: 0,
            lo: 0,
            pc: 0,
            mem,
            mem_size,
            program_end: (prog.len() as Word).wrapping_mul(4),
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.pc == TERMINATION_PC || self.pc == self.program_end
    }

    pub fn reg(&self, r: Reg) -> Word {
        self.regs[r.index()]
    }

    fn set_reg(&mut self, r: Reg, value: Word) {
        if r != Reg::ZERO {
            self.regs[r.index()] = value;
        }
    }

    fn check_address(&self, address: Word) -> Result<(), ErrorKind> {
        if !address.is_multiple_of(4) {
            Err(ErrorKind::UnalignedAccess)
        } else if address >= self.mem_size {
            Err(ErrorKind::OutOfBoundsAccess)
        } else {
            Ok(())
        }
    }

    pub fn load_word(&self, address: Word) -> Result<Word, ErrorKind> {
        self.check_address(address)?;
        Ok(self.mem.get(&address).copied().unwrap_or(0))
    }

    fn store_word(&mut self, address: Word, value: Word) -> Result<(), ErrorKind> {
        self.check_address(address)?;
        if value == 0 {
            self.mem.remove(&address);
        } else {
            self.mem.insert(address, value);
        }
        Ok(())
    }

    fn fetch(&self) -> Result<Instruction, ErrorKind> {
        self.load_word(self.pc).map(decode).map_err(|_| ErrorKind::InvalidInstruction)
    }
}

/// Result of a bounded run. Every variant carries the trace recorded up to
/// the point where execution stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunRes {
    Done { state: MachineState, trace: Trace },
    NotDone { trace: Trace },
    Error { kind: ErrorKind, trace: Trace },
}

impl RunRes {
    pub fn trace(&self) -> &Trace {
        match self {
            RunRes::Done { trace, .. } | RunRes::NotDone { trace } | RunRes::Error { trace, .. } => trace,
        }
    }

    pub fn into_trace(self) -> Trace {
        match self {
            RunRes::Done { trace, .. } | RunRes::NotDone { trace } | RunRes::Error { trace, .. } => trace,
        }
    }
}

fn sym(r: Reg) -> Var {
    Var::gpr(r.index() as u8)
}

/// Execute the instruction at `state.pc`, returning its symbolic form.
///
/// Writes to `$0` are dropped and emit nothing; `jr` emits nothing; `lis`
/// emits a constant with the concretized word that follows it.
pub fn step(state: &mut MachineState) -> Result<Option<SymInstr>, ErrorKind> {
    use Instruction::*;
    let pc = state.pc;
    let instr = state.fetch()?;
    let next = pc.wrapping_add(4);
    state.pc = next;

    let assign = |d: Reg, instr: SymInstr| (d != Reg::ZERO).then_some(instr);

    let emitted = match instr {
        Add { d, s, t } => {
            state.set_reg(d, state.reg(s).wrapping_add(state.reg(t)));
            assign(d, SymInstr::Add { d: sym(d), s: sym(s), t: sym(t) })
        }
        Sub { d, s, t } => {
            state.set_reg(d, state.reg(s).wrapping_sub(state.reg(t)));
            assign(d, SymInstr::Sub { d: sym(d), s: sym(s), t: sym(t) })
        }
        Slt { d, s, t } => {
            state.set_reg(d, ((state.reg(s) as i32) < (state.reg(t) as i32)) as Word);
            assign(d, SymInstr::Slt { d: sym(d), s: sym(s), t: sym(t) })
        }
        Sltu { d, s, t } => {
            state.set_reg(d, (state.reg(s) < state.reg(t)) as Word);
            assign(d, SymInstr::Sltu { d: sym(d), s: sym(s), t: sym(t) })
        }
        Mult { s, t } => {
            let product = (state.reg(s) as i32 as i64).wrapping_mul(state.reg(t) as i32 as i64) as u64;
            state.hi = (product >> 32) as Word;
            state.lo = product as Word;
            Some(SymInstr::Mult { s: sym(s), t: sym(t) })
        }
        Multu { s, t } => {
            let product = (state.reg(s) as u64) * (state.reg(t) as u64);
            state.hi = (product >> 32) as Word;
            state.lo = product as Word;
            Some(SymInstr::Multu { s: sym(s), t: sym(t) })
        }
        Div { s, t } => {
            let (num, den) = (state.reg(s) as i32, state.reg(t) as i32);
            if den == 0 {
                return Err(ErrorKind::DivideByZero);
            }
            state.lo = num.wrapping_div(den) as Word;
            state.hi = num.wrapping_rem(den) as Word;
            Some(SymInstr::Div { s: sym(s), t: sym(t) })
        }
        Divu { s, t } => {
            let (num, den) = (state.reg(s), state.reg(t));
            if den == 0 {
                return Err(ErrorKind::DivideByZero);
            }
            state.lo = num / den;
            state.hi = num % den;
            Some(SymInstr::Divu { s: sym(s), t: sym(t) })
        }
        Mfhi { d } => {
            state.set_reg(d, state.hi);
            assign(d, SymInstr::Mfhi { d: sym(d) })
        }
        Mflo { d } => {
            state.set_reg(d, state.lo);
            assign(d, SymInstr::Mflo { d: sym(d) })
        }
        Lis { d } => {
            let value = state.load_word(next)?;
            state.set_reg(d, value);
            state.pc = next.wrapping_add(4);
            assign(d, SymInstr::Const { d: sym(d), value })
        }
        Jr { s } => {
            state.pc = state.reg(s);
            None
        }
        Jalr { s } => {
            let target = state.reg(s);
            state.set_reg(Reg::RA, next);
            state.pc = target;
            Some(SymInstr::Jalr { return_pc: next })
        }
        Beq { s, t, offset } | Bne { s, t, offset } => {
            let equal = state.reg(s) == state.reg(t);
            let taken = equal == matches!(instr, Beq { .. });
            if taken {
                state.pc = next.wrapping_add((offset as i32 as Word).wrapping_mul(4));
            }
            let rel = if equal { Rel::Eq } else { Rel::Ne };
            Some(SymInstr::PathCond { rel, a: sym(s), b: sym(t), site: pc })
        }
        Lw { t, offset, s } => {
            let address = state.reg(s).wrapping_add(offset as i32 as Word);
            let value = state.load_word(address)?;
            state.set_reg(t, value);
            assign(t, SymInstr::Lw { t: sym(t), offset, s: sym(s), mem: 0 })
        }
        Sw { t, offset, s } => {
            let address = state.reg(s).wrapping_add(offset as i32 as Word);
            state.store_word(address, state.reg(t))?;
            Some(SymInstr::Sw { t: sym(t), offset, s: sym(s), mem: 0 })
        }
        RawWord(_) => return Err(ErrorKind::InvalidInstruction),
    };
    Ok(emitted)
}

/// Run `prog` on inputs `r1`, `r2` for at most `fuel` instructions with the
/// default memory size.
pub fn run(prog: &[Word], r1: Word, r2: Word, fuel: u64) -> RunRes {
    run_with_memory(prog, r1, r2, fuel, DEFAULT_MEM_SIZE)
}

pub fn run_with_memory(prog: &[Word], r1: Word, r2: Word, fuel: u64, mem_size: u32) -> RunRes {
    let mut state = MachineState::load(prog, r1, r2, mem_size);
    let mut instrs = Vec::new();
    for _ in 0..fuel {
        if state.is_terminated() {
            break;
        }
        match step(&mut state) {
            Ok(Some(sym)) => instrs.push(sym),
            Ok(None) => {}
            Err(kind) => {
                return RunRes::Error { kind, trace: Trace::raw(instrs) };
            }
        }
    }
    let trace = Trace::raw(instrs);
    if state.is_terminated() {
        RunRes::Done { state, trace }
    } else {
        RunRes::NotDone { trace }
    }
}
