//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use proptest::prelude::*;

use diseq_core::asm::{assemble, Instruction, Reg, SourceProgram};
use diseq_core::emu::TERMINATION_PC;
use diseq_core::smt::{parse_all, BvOp, Model, ModelValue, Sexp, Solver, Term};
use diseq_core::trace::{Loc, Rel, SymInstr, Trace, Var};
use diseq_core::Word;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.asm"))
}

pub fn fixture(name: &str) -> Vec<Word> {
    let source = SourceProgram::from_file(fixture_path(name)).expect("fixture exists");
    assemble(&source).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn pair(name: &str) -> (Vec<Word>, Vec<Word>) {
    (fixture(&format!("{name}_p1")), fixture(&format!("{name}_p2")))
}

/// The solver named by `DISEQ_SOLVER`, or `z3` from `PATH`.
pub fn solver() -> Solver {
    Solver::default()
}

// ---------------------------------------------------------------------------
// Concrete trace interpreters

/// Deterministic contents of memory cells nobody has written.
pub fn initial_cell(address: Word) -> Word {
    address.wrapping_mul(0x9e37_79b1) ^ 0x5bd1_e995
}

fn sdiv(a: Word, b: Word) -> Word {
    if b == 0 {
        return if (a as i32) < 0 { 1 } else { Word::MAX };
    }
    (a as i32).wrapping_div(b as i32) as Word
}

fn srem(a: Word, b: Word) -> Word {
    if b == 0 {
        return a;
    }
    (a as i32).wrapping_rem(b as i32) as Word
}

fn udiv(a: Word, b: Word) -> Word {
    a.checked_div(b).unwrap_or(Word::MAX)
}

fn urem(a: Word, b: Word) -> Word {
    if b == 0 {
        a
    } else {
        a % b
    }
}

/// Machine state addressed by location, ignoring SSA versions. Executes raw
/// and desugared instructions alike; division by zero follows the SMT-LIB
/// total semantics so raw and desugared traces can be compared on any input.
#[derive(Clone, Debug)]
pub struct LocMachine {
    pub regs: [Word; 32],
    pub hi: Word,
    pub lo: Word,
    pub tmp: u64,
    pub mem: HashMap<Word, Word>,
    pub default_cell: fn(Word) -> Word,
}

impl LocMachine {
    pub fn new(regs: [Word; 32], default_cell: fn(Word) -> Word) -> Self {
        LocMachine { regs, hi: 0, lo: 0, tmp: 0, mem: HashMap::new(), default_cell }
    }

    /// Everything except the default-memory function, for comparisons.
    pub fn snapshot(&self) -> ([Word; 32], Word, Word, u64, Vec<(Word, Word)>) {
        let mut mem: Vec<_> = self.mem.iter().map(|(a, v)| (*a, *v)).collect();
        mem.sort_unstable();
        (self.regs, self.hi, self.lo, self.tmp, mem)
    }

    pub fn get(&self, loc: Loc) -> u64 {
        match loc {
            Loc::Gpr(0) => 0,
            Loc::Gpr(i) => self.regs[i as usize] as u64,
            Loc::Hi => self.hi as u64,
            Loc::Lo => self.lo as u64,
            Loc::Tmp => self.tmp,
        }
    }

    fn set(&mut self, loc: Loc, value: u64) {
        match loc {
            Loc::Gpr(0) => {}
            Loc::Gpr(i) => self.regs[i as usize] = value as Word,
            Loc::Hi => self.hi = value as Word,
            Loc::Lo => self.lo = value as Word,
            Loc::Tmp => self.tmp = value,
        }
    }

    fn r(&self, v: Var) -> Word {
        self.get(v.loc) as Word
    }

    pub fn cell(&self, address: Word) -> Word {
        self.mem.get(&address).copied().unwrap_or_else(|| (self.default_cell)(address))
    }

    /// Execute one instruction; path conditions report whether they hold.
    pub fn exec(&mut self, instr: &SymInstr) -> Option<bool> {
        use SymInstr::*;
        match *instr {
            Add { d, s, t } => self.set(d.loc, self.r(s).wrapping_add(self.r(t)) as u64),
            Sub { d, s, t } => self.set(d.loc, self.r(s).wrapping_sub(self.r(t)) as u64),
            Slt { d, s, t } => self.set(d.loc, ((self.r(s) as i32) < (self.r(t) as i32)) as u64),
            Sltu { d, s, t } => self.set(d.loc, (self.r(s) < self.r(t)) as u64),
            Mult { s, t } => {
                let p = (self.r(s) as i32 as i64).wrapping_mul(self.r(t) as i32 as i64) as u64;
                self.hi = (p >> 32) as Word;
                self.lo = p as Word;
            }
            Multu { s, t } => {
                let p = self.r(s) as u64 * self.r(t) as u64;
                self.hi = (p >> 32) as Word;
                self.lo = p as Word;
            }
            Div { s, t } => {
                let (a, b) = (self.r(s), self.r(t));
                self.lo = sdiv(a, b);
                self.hi = srem(a, b);
            }
            Divu { s, t } => {
                let (a, b) = (self.r(s), self.r(t));
                self.lo = udiv(a, b);
                self.hi = urem(a, b);
            }
            Mfhi { d } => self.set(d.loc, self.hi as u64),
            Mflo { d } => self.set(d.loc, self.lo as u64),
            Const { d, value } => self.set(d.loc, value as u64),
            Lw { t, offset, s, .. } => {
                let address = self.r(s).wrapping_add(offset as i32 as Word);
                self.set(t.loc, self.cell(address) as u64);
            }
            Sw { t, offset, s, .. } => {
                let address = self.r(s).wrapping_add(offset as i32 as Word);
                self.mem.insert(address, self.r(t));
            }
            Jalr { return_pc } => self.regs[31] = return_pc,
            PathCond { rel, a, b, .. } => {
                let equal = self.r(a) == self.r(b);
                return Some(equal == (rel == Rel::Eq));
            }
            Mult64 { tmp, s, t, signed } => {
                let p = if signed {
                    (self.r(s) as i32 as i64).wrapping_mul(self.r(t) as i32 as i64) as u64
                } else {
                    self.r(s) as u64 * self.r(t) as u64
                };
                self.set(tmp.loc, p);
            }
            Low32 { d, tmp } => self.set(d.loc, self.get(tmp.loc) & 0xffff_ffff),
            High32 { d, tmp } => self.set(d.loc, self.get(tmp.loc) >> 32),
            Quot { d, s, t, signed } => {
                let f = if signed { sdiv } else { udiv };
                self.set(d.loc, f(self.r(s), self.r(t)) as u64);
            }
            Rem { d, s, t, signed } => {
                let f = if signed { srem } else { urem };
                self.set(d.loc, f(self.r(s), self.r(t)) as u64);
            }
        }
        None
    }

    /// Run a whole trace, returning the truth of each path condition in order.
    pub fn run(&mut self, t: &Trace) -> Vec<bool> {
        t.instrs.iter().filter_map(|i| self.exec(i)).collect()
    }
}

/// Interprets an SSA trace over versioned variables. Reads of undefined
/// variables fall back to the initial value of their location.
pub struct SsaMachine<'a> {
    pub initial: &'a LocMachine,
    pub env: HashMap<Var, u64>,
    pub mems: HashMap<u32, HashMap<Word, Word>>,
}

impl<'a> SsaMachine<'a> {
    pub fn new(initial: &'a LocMachine) -> Self {
        SsaMachine { initial, env: HashMap::new(), mems: HashMap::new() }
    }

    fn get(&self, v: Var) -> u64 {
        if v.is_zero() {
            return 0;
        }
        self.env.get(&v).copied().unwrap_or_else(|| self.initial.get(v.loc))
    }

    fn r(&self, v: Var) -> Word {
        self.get(v) as Word
    }

    fn set(&mut self, v: Var, value: u64) {
        if !v.is_zero() {
            let masked = if v.loc == Loc::Tmp { value } else { value & 0xffff_ffff };
            assert!(self.env.insert(v, masked).is_none(), "{v} assigned twice");
        }
    }

    fn cell(&self, version: u32, address: Word) -> Word {
        self.mems
            .get(&version)
            .and_then(|m| m.get(&address).copied())
            .unwrap_or_else(|| self.initial.cell(address))
    }

    pub fn exec(&mut self, instr: &SymInstr) -> Option<bool> {
        use SymInstr::*;
        match *instr {
            Add { d, s, t } => self.set(d, self.r(s).wrapping_add(self.r(t)) as u64),
            Sub { d, s, t } => self.set(d, self.r(s).wrapping_sub(self.r(t)) as u64),
            Slt { d, s, t } => self.set(d, ((self.r(s) as i32) < (self.r(t) as i32)) as u64),
            Sltu { d, s, t } => self.set(d, (self.r(s) < self.r(t)) as u64),
            Const { d, value } => self.set(d, value as u64),
            Lw { t, offset, s, mem } => {
                let address = self.r(s).wrapping_add(offset as i32 as Word);
                self.set(t, self.cell(mem, address) as u64);
            }
            Sw { t, offset, s, mem } => {
                let address = self.r(s).wrapping_add(offset as i32 as Word);
                let mut next = self.mems.get(&(mem - 1)).cloned().unwrap_or_default();
                next.insert(address, self.r(t));
                assert!(self.mems.insert(mem, next).is_none(), "mem_{mem} assigned twice");
            }
            PathCond { rel, a, b, .. } => return Some((self.r(a) == self.r(b)) == (rel == Rel::Eq)),
            Mult64 { tmp, s, t, signed } => {
                let p = if signed {
                    (self.r(s) as i32 as i64).wrapping_mul(self.r(t) as i32 as i64) as u64
                } else {
                    self.r(s) as u64 * self.r(t) as u64
                };
                self.set(tmp, p);
            }
            Low32 { d, tmp } => self.set(d, self.get(tmp) & 0xffff_ffff),
            High32 { d, tmp } => self.set(d, self.get(tmp) >> 32),
            Quot { d, s, t, signed } => {
                let f = if signed { sdiv } else { udiv };
                self.set(d, f(self.r(s), self.r(t)) as u64);
            }
            Rem { d, s, t, signed } => {
                let f = if signed { srem } else { urem };
                self.set(d, f(self.r(s), self.r(t)) as u64);
            }
            other => panic!("not a desugared instruction: {other}"),
        }
        None
    }

    pub fn run(&mut self, t: &Trace) -> Vec<bool> {
        t.instrs.iter().filter_map(|i| self.exec(i)).collect()
    }

    /// Value of the newest version of `loc`.
    pub fn final_value(&self, loc: Loc) -> u64 {
        self.env
            .iter()
            .filter(|(v, _)| v.loc == loc)
            .max_by_key(|(v, _)| v.version)
            .map(|(_, value)| *value)
            .unwrap_or_else(|| self.initial.get(loc))
    }

    pub fn final_cell(&self, address: Word) -> Word {
        let newest = self.mems.keys().copied().max().unwrap_or(0);
        self.cell(newest, address)
    }
}

// ---------------------------------------------------------------------------
// Bitvector evaluator for emitted formulas

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Val {
    Bv(u64, u32),
    Bool(bool),
    /// Array value: explicit entries over a default. Entries equal to the
    /// default are never stored, so structural equality is extensional.
    Arr(BTreeMap<u64, u64>, u64),
}

fn array_store(mut entries: BTreeMap<u64, u64>, default: u64, index: u64, value: u64) -> Val {
    if value == default {
        entries.remove(&index);
    } else {
        entries.insert(index, value);
    }
    Val::Arr(entries, default)
}

fn literal(s: &Sexp) -> Option<u64> {
    let atom = s.as_atom()?;
    if let Some(hex) = atom.strip_prefix("#x") {
        return u64::from_str_radix(hex, 16).ok();
    }
    if let Some(bin) = atom.strip_prefix("#b") {
        return u64::from_str_radix(bin, 2).ok();
    }
    match s.as_list()? {
        [_, bv, _] => bv.as_atom()?.strip_prefix("bv")?.parse().ok(),
        _ => None,
    }
}

/// Evaluate a solver's lambda body at point `x`; only the boolean and `ite`
/// structure solvers print for finite arrays is supported.
fn eval_lambda_body(body: &Sexp, param: &str, x: u64) -> Result<Val, String> {
    if body.as_atom() == Some(param) {
        return Ok(Val::Bv(x, 32));
    }
    if let Some(v) = literal(body) {
        return Ok(Val::Bv(v, 32));
    }
    let items = body.as_list().ok_or_else(|| format!("unsupported lambda body {body}"))?;
    let head = items.first().and_then(Sexp::as_atom).unwrap_or("");
    let args = &items[1..];
    let boolean = |v: Val| match v {
        Val::Bool(b) => Ok(b),
        other => Err(format!("expected bool, got {other:?}")),
    };
    match head {
        "ite" if args.len() == 3 => {
            if boolean(eval_lambda_body(&args[0], param, x)?)? {
                eval_lambda_body(&args[1], param, x)
            } else {
                eval_lambda_body(&args[2], param, x)
            }
        }
        "=" if args.len() == 2 => {
            Ok(Val::Bool(eval_lambda_body(&args[0], param, x)? == eval_lambda_body(&args[1], param, x)?))
        }
        "not" if args.len() == 1 => Ok(Val::Bool(!boolean(eval_lambda_body(&args[0], param, x)?)?)),
        "and" | "or" => {
            let mut values = Vec::new();
            for a in args {
                values.push(boolean(eval_lambda_body(a, param, x)?)?);
            }
            Ok(Val::Bool(if head == "and" { values.iter().all(|&b| b) } else { values.iter().any(|&b| b) }))
        }
        _ => Err(format!("unsupported lambda body {body}")),
    }
}

fn collect_literals(s: &Sexp, out: &mut Vec<u64>) {
    if let Some(v) = literal(s) {
        out.push(v);
    } else if let Some(items) = s.as_list() {
        items.iter().for_each(|i| collect_literals(i, out));
    }
}

/// Interpret a model's printed array value.
pub fn parse_array(s: &Sexp) -> Result<Val, String> {
    parse_array_in(s, &HashMap::new())
}

fn parse_array_in(s: &Sexp, bindings: &HashMap<String, Val>) -> Result<Val, String> {
    if let Some(bound) = s.as_atom().and_then(|a| bindings.get(a)) {
        return Ok(bound.clone());
    }
    let items = s.as_list().ok_or_else(|| format!("unsupported array value {s}"))?;
    match items {
        // ((as const (Array ...)) v)
        [head, v] if head.as_list().and_then(|h| h.get(1)).and_then(Sexp::as_atom) == Some("const") => {
            let default = literal(v).ok_or_else(|| format!("bad array default {v}"))?;
            Ok(Val::Arr(BTreeMap::new(), default))
        }
        [head, a, i, v] if head.as_atom() == Some("store") => {
            let Val::Arr(entries, default) = parse_array_in(a, bindings)? else {
                return Err(format!("store into a non-array in {s}"));
            };
            let (Some(i), Some(v)) = (literal(i), literal(v)) else {
                return Err(format!("bad store in {s}"));
            };
            Ok(array_store(entries, default, i, v))
        }
        [head, defs, body] if head.as_atom() == Some("let") => {
            let mut inner = bindings.clone();
            for def in defs.as_list().ok_or_else(|| format!("bad let in {s}"))? {
                let [name, value] = def.as_list().ok_or_else(|| format!("bad let in {s}"))? else {
                    return Err(format!("bad let binding {def}"));
                };
                let name = name.as_atom().ok_or_else(|| format!("bad let binding {def}"))?;
                inner.insert(name.to_string(), parse_array_in(value, bindings)?);
            }
            parse_array_in(body, &inner)
        }
        [head, params, body] if head.as_atom() == Some("lambda") => {
            let param = params
                .as_list()
                .and_then(|p| p.first())
                .and_then(Sexp::as_list)
                .and_then(|p| p.first())
                .and_then(Sexp::as_atom)
                .ok_or_else(|| format!("bad lambda {s}"))?;
            let mut points = Vec::new();
            collect_literals(body, &mut points);
            let fresh = (0u64..).find(|p| !points.contains(p)).expect("some point is unused");
            let Val::Bv(default, _) = eval_lambda_body(body, param, fresh)? else {
                return Err(format!("non-bitvector lambda {s}"));
            };
            let mut entries = BTreeMap::new();
            for p in points.into_iter().filter(|p| *p <= u32::MAX as u64) {
                if let Val::Bv(v, _) = eval_lambda_body(body, param, p)? {
                    if v != default {
                        entries.insert(p, v);
                    }
                }
            }
            Ok(Val::Arr(entries, default))
        }
        _ => Err(format!("unsupported array value {s}")),
    }
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn bv(value: u64, width: u32) -> Val {
    Val::Bv(value & mask(width), width)
}

fn negative(v: u64, w: u32) -> bool {
    (v >> (w - 1)) & 1 == 1
}

fn neg(v: u64, w: u32) -> u64 {
    v.wrapping_neg() & mask(w)
}

fn bv_udiv(a: u64, b: u64, w: u32) -> u64 {
    a.checked_div(b).unwrap_or(mask(w))
}

fn bv_urem(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        a % b
    }
}

/// Evaluate a term under a model, following the SMT-LIB bitvector theory
/// definitions (including division by zero).
pub fn eval(term: &Term, model: &Model) -> Result<Val, String> {
    Ok(match term {
        Term::Const(name) => match model.get(name) {
            Some(ModelValue::Bits { value, width }) => bv(*value, *width),
            Some(ModelValue::Other(text)) => {
                let parsed = parse_all(text)?;
                let [value] = parsed.as_slice() else {
                    return Err(format!("{name} has unsupported value {text}"));
                };
                parse_array(value)?
            }
            None => return Err(format!("{name} missing from model")),
        },
        Term::Lit { value, width } => bv(*value, *width),
        Term::Bin(op, a, b) => {
            let (Val::Bv(a, w), Val::Bv(b, wb)) = (eval(a, model)?, eval(b, model)?) else {
                return Err(format!("non-bitvector operand in {term}"));
            };
            if w != wb {
                return Err(format!("width mismatch in {term}"));
            }
            let (na, nb) = (negative(a, w), negative(b, w));
            let (abs_a, abs_b) = (if na { neg(a, w) } else { a }, if nb { neg(b, w) } else { b });
            match op {
                BvOp::Add => bv(a.wrapping_add(b), w),
                BvOp::Sub => bv(a.wrapping_sub(b), w),
                BvOp::Mul => bv(a.wrapping_mul(b), w),
                BvOp::Udiv => bv(bv_udiv(a, b, w), w),
                BvOp::Urem => bv(bv_urem(a, b), w),
                BvOp::Sdiv => {
                    let q = bv_udiv(abs_a, abs_b, w);
                    bv(if na != nb { neg(q, w) } else { q }, w)
                }
                BvOp::Srem => {
                    let r = bv_urem(abs_a, abs_b);
                    bv(if na { neg(r, w) } else { r }, w)
                }
                BvOp::Ult => Val::Bool(a < b),
                BvOp::Slt => Val::Bool(match (na, nb) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => a < b,
                }),
            }
        }
        Term::SignExtend(n, a) => match eval(a, model)? {
            Val::Bv(v, w) => {
                let extended = if negative(v, w) { v | (mask(w + n) & !mask(w)) } else { v };
                bv(extended, w + n)
            }
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::ZeroExtend(n, a) => match eval(a, model)? {
            Val::Bv(v, w) => bv(v, w + n),
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::Extract { hi, lo, arg } => match eval(arg, model)? {
            Val::Bv(v, _) => bv(v >> lo, hi - lo + 1),
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::Ite(c, a, b) => match eval(c, model)? {
            Val::Bool(true) => eval(a, model)?,
            Val::Bool(false) => eval(b, model)?,
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::Eq(a, b) => Val::Bool(eval(a, model)? == eval(b, model)?),
        Term::Not(a) => match eval(a, model)? {
            Val::Bool(b) => Val::Bool(!b),
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::Select(a, i) => match (eval(a, model)?, eval(i, model)?) {
            (Val::Arr(entries, default), Val::Bv(i, _)) => {
                bv(entries.get(&i).copied().unwrap_or(default), 32)
            }
            _ => return Err(format!("ill-sorted {term}")),
        },
        Term::Store(a, i, v) => match (eval(a, model)?, eval(i, model)?, eval(v, model)?) {
            (Val::Arr(entries, default), Val::Bv(i, _), Val::Bv(v, _)) => array_store(entries, default, i, v),
            _ => return Err(format!("ill-sorted {term}")),
        },
    })
}

// ---------------------------------------------------------------------------
// Generators

pub fn gpr_var(max: u8) -> impl Strategy<Value = Var> {
    (0..=max).prop_map(Var::gpr)
}

/// Raw trace instructions over `$0..=$6`, optionally including memory.
pub fn raw_instr(with_memory: bool) -> BoxedStrategy<SymInstr> {
    let r = || gpr_var(6);
    let mut options = vec![
        (r(), r(), r()).prop_map(|(d, s, t)| SymInstr::Add { d, s, t }).boxed(),
        (r(), r(), r()).prop_map(|(d, s, t)| SymInstr::Sub { d, s, t }).boxed(),
        (r(), r(), r()).prop_map(|(d, s, t)| SymInstr::Slt { d, s, t }).boxed(),
        (r(), r(), r()).prop_map(|(d, s, t)| SymInstr::Sltu { d, s, t }).boxed(),
        (r(), r()).prop_map(|(s, t)| SymInstr::Mult { s, t }).boxed(),
        (r(), r()).prop_map(|(s, t)| SymInstr::Multu { s, t }).boxed(),
        (r(), r()).prop_map(|(s, t)| SymInstr::Div { s, t }).boxed(),
        (r(), r()).prop_map(|(s, t)| SymInstr::Divu { s, t }).boxed(),
        r().prop_map(|d| SymInstr::Mfhi { d }).boxed(),
        r().prop_map(|d| SymInstr::Mflo { d }).boxed(),
        (r(), any::<Word>()).prop_map(|(d, value)| SymInstr::Const { d, value }).boxed(),
        (prop_oneof![Just(Rel::Eq), Just(Rel::Ne)], r(), r(), 0..64u32)
            .prop_map(|(rel, a, b, site)| SymInstr::PathCond { rel, a, b, site: site * 4 })
            .boxed(),
        (0..64u32).prop_map(|pc| SymInstr::Jalr { return_pc: pc * 4 }).boxed(),
    ];
    if with_memory {
        options.push(
            (r(), -8i16..8, r())
                .prop_map(|(t, off, s)| SymInstr::Lw { t, offset: off * 4, s, mem: 0 })
                .boxed(),
        );
        options.push(
            (r(), -8i16..8, r())
                .prop_map(|(t, off, s)| SymInstr::Sw { t, offset: off * 4, s, mem: 0 })
                .boxed(),
        );
    }
    proptest::strategy::Union::new(options).boxed()
}

pub fn raw_trace(max_len: usize, with_memory: bool) -> impl Strategy<Value = Trace> {
    proptest::collection::vec(raw_instr(with_memory), 0..max_len).prop_map(Trace::raw)
}

pub fn regs_strategy() -> impl Strategy<Value = [Word; 32]> {
    proptest::collection::vec(
        prop_oneof![Just(0u32), Just(1), Just(u32::MAX), Just(0x8000_0000), any::<Word>()],
        32,
    )
    .prop_map(|v| {
        let mut regs = [0; 32];
        regs.copy_from_slice(&v);
        regs[0] = 0;
        regs
    })
}

fn reg(i: u8) -> Reg {
    Reg::new(i).expect("register index below 32")
}

/// One slot of a random program: an instruction, optionally followed by the
/// data word of a `lis`.
fn program_slot(len: usize) -> BoxedStrategy<Vec<Word>> {
    let r = || (0u8..8).prop_map(reg);
    // Loads and stores stay within the top 64 bytes of memory below `$30`.
    let stack_offset = || (-16i16..0).prop_map(|k| k * 4);
    let branch_offset = move || -(len as i16)..len as i16;
    let one = |i: Instruction| vec![i.encode()];
    prop_oneof![
        (r(), r(), r()).prop_map(move |(d, s, t)| one(Instruction::Add { d, s, t })),
        (r(), r(), r()).prop_map(move |(d, s, t)| one(Instruction::Sub { d, s, t })),
        (r(), r(), r()).prop_map(move |(d, s, t)| one(Instruction::Slt { d, s, t })),
        (r(), r(), r()).prop_map(move |(d, s, t)| one(Instruction::Sltu { d, s, t })),
        (r(), r()).prop_map(move |(s, t)| one(Instruction::Mult { s, t })),
        (r(), r()).prop_map(move |(s, t)| one(Instruction::Multu { s, t })),
        (r(), r()).prop_map(move |(s, t)| one(Instruction::Div { s, t })),
        (r(), r()).prop_map(move |(s, t)| one(Instruction::Divu { s, t })),
        r().prop_map(move |d| one(Instruction::Mfhi { d })),
        r().prop_map(move |d| one(Instruction::Mflo { d })),
        (r(), any::<Word>()).prop_map(|(d, w)| vec![Instruction::Lis { d }.encode(), w]),
        (r(), r(), branch_offset()).prop_map(move |(s, t, offset)| one(Instruction::Beq { s, t, offset })),
        (r(), r(), branch_offset()).prop_map(move |(s, t, offset)| one(Instruction::Bne { s, t, offset })),
        (r(), stack_offset()).prop_map(move |(t, offset)| one(Instruction::Lw { t, offset, s: reg(30) })),
        (r(), stack_offset()).prop_map(move |(t, offset)| one(Instruction::Sw { t, offset, s: reg(30) })),
    ]
    .boxed()
}

/// Random programs built from every non-jump form; branches may loop.
pub fn program(max_slots: usize) -> impl Strategy<Value = Vec<Word>> {
    (1..max_slots)
        .prop_flat_map(|n| proptest::collection::vec(program_slot(n), n))
        .prop_map(|slots| slots.concat())
}

/// Registers as the emulator sets them up before the first instruction.
pub fn initial_regs(r1: Word, r2: Word, mem_size: u32) -> [Word; 32] {
    let mut regs = [0; 32];
    regs[1] = r1;
    regs[2] = r2;
    regs[30] = mem_size;
    regs[31] = TERMINATION_PC;
    regs
}

/// Any of the 17 instruction forms with arbitrary operands.
pub fn instruction() -> impl Strategy<Value = Instruction> {
    let r = || (0u8..32).prop_map(reg);
    prop_oneof![
        (r(), r(), r()).prop_map(|(d, s, t)| Instruction::Add { d, s, t }),
        (r(), r(), r()).prop_map(|(d, s, t)| Instruction::Sub { d, s, t }),
        (r(), r(), r()).prop_map(|(d, s, t)| Instruction::Slt { d, s, t }),
        (r(), r(), r()).prop_map(|(d, s, t)| Instruction::Sltu { d, s, t }),
        (r(), r()).prop_map(|(s, t)| Instruction::Mult { s, t }),
        (r(), r()).prop_map(|(s, t)| Instruction::Multu { s, t }),
        (r(), r()).prop_map(|(s, t)| Instruction::Div { s, t }),
        (r(), r()).prop_map(|(s, t)| Instruction::Divu { s, t }),
        r().prop_map(|d| Instruction::Mfhi { d }),
        r().prop_map(|d| Instruction::Mflo { d }),
        r().prop_map(|d| Instruction::Lis { d }),
        r().prop_map(|s| Instruction::Jr { s }),
        r().prop_map(|s| Instruction::Jalr { s }),
        (r(), r(), any::<i16>()).prop_map(|(s, t, offset)| Instruction::Beq { s, t, offset }),
        (r(), r(), any::<i16>()).prop_map(|(s, t, offset)| Instruction::Bne { s, t, offset }),
        (r(), any::<i16>(), r()).prop_map(|(t, offset, s)| Instruction::Lw { t, offset, s }),
        (r(), any::<i16>(), r()).prop_map(|(t, offset, s)| Instruction::Sw { t, offset, s }),
    ]
}

/// Assembly text and encoding pairs recorded from an independent assembler.
pub fn golden_encodings() -> Vec<(String, Word)> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/encodings.txt");
    std::fs::read_to_string(path)
        .expect("golden file present")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (text, hex) = line.split_once('\t').expect("tab-separated golden row");
            (text.to_string(), Word::from_str_radix(hex, 16).expect("hex word"))
        })
        .collect()
}

/// Check one instruction: text round-trips through the assembler and the
/// encoding round-trips through the decoder.
pub fn check_round_trip(instr: Instruction) -> Result<(), String> {
    let text = instr.to_string();
    let words = assemble(&SourceProgram::inline(text.clone())).map_err(|e| format!("{text}: {e}"))?;
    if words != [instr.encode()] {
        return Err(format!("{text}: assembled to {words:08x?}, encode gives {:08x}", instr.encode()));
    }
    let decoded = diseq_core::decode(words[0]);
    if decoded != instr {
        return Err(format!("{text}: decoded {:08x} as {decoded}", words[0]));
    }
    Ok(())
}

/// Check every golden row against the assembler and the decoder.
pub fn check_golden() -> Result<usize, String> {
    let rows = golden_encodings();
    let mut forms = std::collections::BTreeSet::new();
    for (text, expected) in &rows {
        let words = assemble(&SourceProgram::inline(text.clone())).map_err(|e| format!("{text}: {e}"))?;
        if words != [*expected] {
            return Err(format!("{text}: assembled {words:08x?}, reference {expected:08x}"));
        }
        let decoded = diseq_core::decode(*expected);
        if decoded.to_string() != *text {
            return Err(format!("{expected:08x}: decoded as `{decoded}`, reference `{text}`"));
        }
        forms.insert(decoded.mnemonic());
    }
    if forms.len() != 17 {
        return Err(format!("golden rows cover {} forms: {forms:?}", forms.len()));
    }
    Ok(rows.len())
}

/// Evaluate every assertion of `formula` under `model`.
pub fn model_satisfies(formula: &diseq_core::smt::Formula, model: &Model) -> Result<(), String> {
    for assertion in &formula.assertions {
        match eval(assertion, model) {
            Ok(Val::Bool(true)) => {}
            other => return Err(format!("{assertion} evaluates to {other:?} under {model:?}")),
        }
    }
    Ok(())
}

/// Every prefix of `t` ending in a negated path condition, as solver queries.
pub fn negated_prefixes(t: &Trace) -> Vec<Trace> {
    t.instrs
        .iter()
        .enumerate()
        .filter(|(_, i)| i.is_path_cond())
        .map(|(pos, _)| {
            let mut prefix = t.instrs[..=pos].to_vec();
            if let Some(SymInstr::PathCond { rel, .. }) = prefix.last_mut() {
                *rel = rel.negate();
            }
            Trace { instrs: prefix, ssa: true }
        })
        .collect()
}
