use std::fmt;

/// Sort of a declared constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sort {
    BitVec(u32),
    /// Memory: 32-bit addresses to 32-bit words.
    Memory,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::BitVec(w) => write!(f, "(_ BitVec {w})"),
            Sort::Memory => write!(f, "(Array (_ BitVec 32) (_ BitVec 32))"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BvOp {
    Add,
    Sub,
    Mul,
    Sdiv,
    Srem,
    Udiv,
    Urem,
    Slt,
    Ult,
}

impl BvOp {
    pub fn name(self) -> &'static str {
        match self {
            BvOp::Add => "bvadd",
            BvOp::Sub => "bvsub",
            BvOp::Mul => "bvmul",
            BvOp::Sdiv => "bvsdiv",
            BvOp::Srem => "bvsrem",
            BvOp::Udiv => "bvudiv",
            BvOp::Urem => "bvurem",
            BvOp::Slt => "bvslt",
            BvOp::Ult => "bvult",
        }
    }
}

/// The fragment of SMT-LIB terms the translation produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Const(String),
    /// Bitvector literal, printed as `(_ bvN w)`.
    Lit {
        value: u64,
        width: u32,
    },
    Bin(BvOp, Box<Term>, Box<Term>),
    SignExtend(u32, Box<Term>),
    ZeroExtend(u32, Box<Term>),
    Extract {
        hi: u32,
        lo: u32,
        arg: Box<Term>,
    },
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Eq(Box<Term>, Box<Term>),
    Not(Box<Term>),
    Select(Box<Term>, Box<Term>),
    Store(Box<Term>, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }

    pub fn bv32(value: u32) -> Term {
        Term::Lit { value: value as u64, width: 32 }
    }

    pub fn bin(op: BvOp, a: Term, b: Term) -> Term {
        Term::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::Eq(Box::new(a), Box::new(b))
    }

    pub fn negation(a: Term) -> Term {
        Term::Not(Box::new(a))
    }

    pub fn ite(c: Term, a: Term, b: Term) -> Term {
        Term::Ite(Box::new(c), Box::new(a), Box::new(b))
    }

    /// Visit every constant name in the term.
    pub fn for_each_const(&self, f: &mut impl FnMut(&str)) {
        match self {
            Term::Const(name) => f(name),
            Term::Lit { .. } => {}
            Term::Bin(_, a, b) | Term::Eq(a, b) | Term::Select(a, b) => {
                a.for_each_const(f);
                b.for_each_const(f);
            }
            Term::SignExtend(_, a) | Term::ZeroExtend(_, a) | Term::Not(a) => a.for_each_const(f),
            Term::Extract { arg, .. } => arg.for_each_const(f),
            Term::Ite(a, b, c) | Term::Store(a, b, c) => {
                a.for_each_const(f);
                b.for_each_const(f);
                c.for_each_const(f);
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(name) => f.write_str(name),
            Term::Lit { value, width } => write!(f, "(_ bv{value} {width})"),
            Term::Bin(op, a, b) => write!(f, "({} {a} {b})", op.name()),
            Term::SignExtend(n, a) => write!(f, "((_ sign_extend {n}) {a})"),
            Term::ZeroExtend(n, a) => write!(f, "((_ zero_extend {n}) {a})"),
            Term::Extract { hi, lo, arg } => write!(f, "((_ extract {hi} {lo}) {arg})"),
            Term::Ite(c, a, b) => write!(f, "(ite {c} {a} {b})"),
            Term::Eq(a, b) => write!(f, "(= {a} {b})"),
            Term::Not(a) => write!(f, "(not {a})"),
            Term::Select(m, i) => write!(f, "(select {m} {i})"),
            Term::Store(m, i, v) => write!(f, "(store {m} {i} {v})"),
        }
    }
}
