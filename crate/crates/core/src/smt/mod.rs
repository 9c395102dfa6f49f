//! Translation of SSA traces into quantifier-free bitvector/array formulas,
//! plus parsing of solver models back into program inputs.

mod sexp;
mod solver;
mod term;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::trace::{Loc, Rel, SymInstr, Trace, Var};
use crate::Word;

pub use sexp::{parse_all, Sexp};
pub use solver::{CheckResult, Solver, SolverConfig, SolverError, SOLVER_ENV};
pub use term::{BvOp, Sort, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmitError {
    #[error("trace is not in SSA form")]
    NotSsa,
    #[error("instruction #{0} must be desugared before translation")]
    NotDesugared(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed model: {0}")]
pub struct ModelError(pub String);

/// SMT-LIB constant name for a trace variable. `$0` is the unversioned `r0`.
pub fn var_name(v: Var) -> String {
    match v.loc {
        Loc::Gpr(0) => "r0".to_string(),
        Loc::Gpr(i) => format!("r{i}_{}", v.version),
        Loc::Hi => format!("hi_{}", v.version),
        Loc::Lo => format!("lo_{}", v.version),
        Loc::Tmp => format!("tmp_{}", v.version),
    }
}

pub fn mem_name(version: u32) -> String {
    format!("mem_{version}")
}

/// Declarations plus one assertion per trace instruction, preceded by the
/// assertion pinning `r0` to zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Formula {
    pub declarations: Vec<(String, Sort)>,
    pub assertions: Vec<Term>,
}

impl Formula {
    /// Complete SMT-LIB script, ending in `(check-sat)` and `(get-model)`.
    pub fn script(&self) -> String {
        let mut out = String::new();
        out.push_str("(set-option :produce-models true)\n");
        out.push_str("(set-logic QF_ABV)\n");
        for (name, sort) in &self.declarations {
            let _ = writeln!(out, "(declare-const {name} {sort})");
        }
        for assertion in &self.assertions {
            let _ = writeln!(out, "(assert {assertion})");
        }
        out.push_str("(check-sat)\n(get-model)\n");
        out
    }
}

fn var(v: Var) -> Term {
    Term::var(var_name(v))
}

fn address(offset: i16, base: Var) -> Term {
    Term::bin(BvOp::Add, Term::bv32(offset as i32 as u32), var(base))
}

fn boolean_bit(cond: Term) -> Term {
    Term::ite(cond, Term::bv32(1), Term::bv32(0))
}

fn translate(instr: &SymInstr) -> Term {
    use SymInstr::*;
    let arith = |op, d, s, t| Term::eq(var(d), Term::bin(op, var(s), var(t)));
    match *instr {
        Add { d, s, t } => arith(BvOp::Add, d, s, t),
        Sub { d, s, t } => arith(BvOp::Sub, d, s, t),
        Slt { d, s, t } => Term::eq(var(d), boolean_bit(Term::bin(BvOp::Slt, var(s), var(t)))),
        Sltu { d, s, t } => Term::eq(var(d), boolean_bit(Term::bin(BvOp::Ult, var(s), var(t)))),
        Const { d, value } => Term::eq(var(d), Term::bv32(value)),
        Lw { t, offset, s, mem } => {
            Term::eq(var(t), Term::Select(Box::new(Term::var(mem_name(mem))), Box::new(address(offset, s))))
        }
        Sw { t, offset, s, mem } => Term::eq(
            Term::var(mem_name(mem)),
            Term::Store(
                Box::new(Term::var(mem_name(mem - 1))),
                Box::new(address(offset, s)),
                Box::new(var(t)),
            ),
        ),
        PathCond { rel, a, b, .. } => match rel {
            Rel::Eq => Term::eq(var(a), var(b)),
            Rel::Ne => Term::negation(Term::eq(var(a), var(b))),
        },
        Mult64 { tmp, s, t, signed } => {
            let widen = |v: Var| {
                if signed {
                    Term::SignExtend(32, Box::new(var(v)))
                } else {
                    Term::ZeroExtend(32, Box::new(var(v)))
                }
            };
            Term::eq(var(tmp), Term::bin(BvOp::Mul, widen(s), widen(t)))
        }
        Low32 { d, tmp } => Term::eq(var(d), Term::Extract { hi: 31, lo: 0, arg: Box::new(var(tmp)) }),
        High32 { d, tmp } => Term::eq(var(d), Term::Extract { hi: 63, lo: 32, arg: Box::new(var(tmp)) }),
        Quot { d, s, t, signed } => arith(if signed { BvOp::Sdiv } else { BvOp::Udiv }, d, s, t),
        Rem { d, s, t, signed } => arith(if signed { BvOp::Srem } else { BvOp::Urem }, d, s, t),
        Mult { .. } | Multu { .. } | Div { .. } | Divu { .. } | Mfhi { .. } | Mflo { .. } | Jalr { .. } => {
            unreachable!("raw forms are rejected before translation")
        }
    }
}

fn sort_of(name: &str) -> Sort {
    if name.starts_with("mem_") {
        Sort::Memory
    } else if name.starts_with("tmp_") {
        Sort::BitVec(64)
    } else {
        Sort::BitVec(32)
    }
}

/// Translate an SSA trace.
pub fn emit_formula(t: &Trace) -> Result<Formula, EmitError> {
    if !t.ssa {
        return Err(EmitError::NotSsa);
    }
    if let Some(pos) = t.instrs.iter().position(SymInstr::is_raw_only) {
        return Err(EmitError::NotDesugared(pos));
    }
    let r0 = Term::var("r0");
    let mut assertions = vec![Term::eq(r0, Term::bv32(0))];
    assertions.extend(t.instrs.iter().map(translate));

    let mut seen = HashSet::new();
    let mut declarations = Vec::new();
    for assertion in &assertions {
        assertion.for_each_const(&mut |name| {
            if seen.insert(name.to_string()) {
                declarations.push((name.to_string(), sort_of(name)));
            }
        });
    }
    Ok(Formula { declarations, assertions })
}

/// Value of one input register in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegVal {
    /// The model leaves the register unconstrained.
    Unbound,
    Fixed(Word),
}

impl RegVal {
    pub fn or(self, fallback: Word) -> Word {
        match self {
            RegVal::Unbound => fallback,
            RegVal::Fixed(v) => v,
        }
    }
}

/// Solver model restricted to the program inputs `$1` and `$2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Soln {
    pub r1: RegVal,
    pub r2: RegVal,
}

impl Soln {
    pub const UNBOUND: Soln = Soln { r1: RegVal::Unbound, r2: RegVal::Unbound };

    /// Concrete inputs, filling unbound registers from `fallback`.
    pub fn inputs(&self, fallback: (Word, Word)) -> (Word, Word) {
        (self.r1.or(fallback.0), self.r2.or(fallback.1))
    }

    pub fn from_model(model: &Model) -> Soln {
        let get = |name: &str| match model.get(name) {
            Some(ModelValue::Bits { value, .. }) => RegVal::Fixed(*value as Word),
            _ => RegVal::Unbound,
        };
        Soln { r1: get("r1_1"), r2: get("r2_1") }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelValue {
    Bits {
        value: u64,
        width: u32,
    },
    /// Anything that is not a bitvector literal, e.g. an array value.
    Other(String),
}

/// All `define-fun` bindings of a model, by name.
pub type Model = BTreeMap<String, ModelValue>;

fn parse_bv_literal(value: &Sexp) -> Option<(u64, u32)> {
    if let Some(atom) = value.as_atom() {
        if let Some(hex) = atom.strip_prefix("#x") {
            return Some((u64::from_str_radix(hex, 16).ok()?, 4 * hex.len() as u32));
        }
        if let Some(bin) = atom.strip_prefix("#b") {
            return Some((u64::from_str_radix(bin, 2).ok()?, bin.len() as u32));
        }
        return None;
    }
    match value.as_list()? {
        [underscore, bv, width] if underscore.as_atom() == Some("_") => {
            let digits = bv.as_atom()?.strip_prefix("bv")?;
            Some((digits.parse().ok()?, width.as_atom()?.parse().ok()?))
        }
        _ => None,
    }
}

fn is_bitvec_sort(sort: &Sexp) -> bool {
    matches!(sort.as_list(), Some([u, b, _]) if u.as_atom() == Some("_") && b.as_atom() == Some("BitVec"))
}

fn collect_model(items: &[Sexp], model: &mut Model) -> Result<(), ModelError> {
    for item in items {
        let Some(list) = item.as_list() else {
            return Err(ModelError(format!("unexpected atom `{item}`")));
        };
        match list.first().and_then(Sexp::as_atom) {
            Some("define-fun") => {
                let [_, name, params, sort, value] = list else {
                    return Err(ModelError(format!("bad define-fun `{item}`")));
                };
                let name =
                    name.as_atom().ok_or_else(|| ModelError(format!("bad define-fun name in `{item}`")))?;
                let is_constant = params.as_list().is_some_and(|p| p.is_empty());
                let parsed = if is_constant && is_bitvec_sort(sort) {
                    let (value, width) = parse_bv_literal(value)
                        .ok_or_else(|| ModelError(format!("bad bitvector value for {name}: `{value}`")))?;
                    ModelValue::Bits { value, width }
                } else {
                    ModelValue::Other(value.to_string())
                };
                model.insert(name.to_string(), parsed);
            }
            Some("model") => collect_model(&list[1..], model)?,
            // declare-fun / forall entries some solvers add for uninterpreted sorts
            Some("declare-fun") | Some("forall") => {}
            Some(other) => return Err(ModelError(format!("unexpected entry `{other}`"))),
            None => collect_model(list, model)?,
        }
    }
    Ok(())
}

/// Parse a `(get-model)` response into all its bindings. Accepts both the
/// `(model ...)` wrapper and the bare list form.
pub fn parse_model_values(text: &str) -> Result<Model, ModelError> {
    let items = parse_all(text).map_err(ModelError)?;
    let mut model = Model::new();
    collect_model(&items, &mut model)?;
    Ok(model)
}

/// Parse a `(get-model)` response, keeping only the input registers.
pub fn parse_model(text: &str) -> Result<Soln, ModelError> {
    parse_model_values(text).map(|m| Soln::from_model(&m))
}
