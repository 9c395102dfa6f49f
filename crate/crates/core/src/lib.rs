//! Concolic disequivalence checking for a small MIPS subset.
//!
//! Two programs read their inputs from `$1` and `$2` and leave their result
//! in `$3`. [`engine::compare`] alternates concolic exploration between the
//! two programs and either produces a concrete input pair on which they
//! disagree, or gives up after exhausting the bounded path space.
//!
//! The pipeline is split across modules:
//!
//! * [`asm`]: text assembly to words and back.
//! * [`emu`]: an instrumented emulator that records a symbolic trace.
//! * [`trace`]: desugaring, simplification, trimming and SSA conversion.
//! * [`smt`]: SMT-LIB emission, an external solver client and model parsing.
//! * [`engine`]: the alternating exploration loop and verdicts.

pub mod asm;
pub mod emu;
pub mod engine;
pub mod smt;
pub mod trace;

/// A 32-bit bit pattern: program text, register contents and memory cells.
pub type Word = u32;

pub use asm::{assemble, decode, Instruction, Reg};
pub use emu::{run, ErrorKind, MachineState, RunRes};
pub use engine::{compare, CompareOptions, Outcome, Verdict};
pub use trace::{transform, SymInstr, Trace};
