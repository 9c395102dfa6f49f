//! Alternating concolic exploration of two programs.
//!
//! Each iteration picks a driver program, negates the deepest untried path
//! condition on its most recent path, asks the solver for inputs reaching
//! the flipped branch, and runs *both* programs on them. Results are
//! compared under the bounded-equivalence rules: a timeout on either side
//! proves nothing, two failures agree, and otherwise the `$3` values must
//! match.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::emu::{run_with_memory, ErrorKind, RunRes, DEFAULT_MEM_SIZE};
use crate::smt::{Solver, SolverError};
use crate::trace::{transform, Rel, SymInstr, Trace, Var};
use crate::Word;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    P1,
    P2,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::P1 => Side::P2,
            Side::P2 => Side::P1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::P1 => "P1",
            Side::P2 => "P2",
        })
    }
}

/// Observable result of one bounded run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    /// Stopped normally with this value in `$3`.
    Value(Word),
    Failed(ErrorKind),
    /// Ran out of fuel.
    Timeout,
}

impl From<&RunRes> for Outcome {
    fn from(res: &RunRes) -> Outcome {
        match res {
            RunRes::Done { state, .. } => Outcome::Value(state.regs[3]),
            RunRes::Error { kind, .. } => Outcome::Failed(*kind),
            RunRes::NotDone { .. } => Outcome::Timeout,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(w) => write!(f, "$3 = {} ({w:#010x})", *w as i32),
            Outcome::Failed(kind) => write!(f, "error: {kind}"),
            Outcome::Timeout => f.write_str("did not stop within the fuel limit"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Conflict,
    Consistent,
    NoInference,
}

pub fn compare_outcomes(o1: Outcome, o2: Outcome) -> Relation {
    use Outcome::*;
    match (o1, o2) {
        (Timeout, _) | (_, Timeout) => Relation::NoInference,
        (Failed(_), Failed(_)) => Relation::Consistent,
        (Failed(_), Value(_)) | (Value(_), Failed(_)) => Relation::Conflict,
        (Value(a), Value(b)) if a == b => Relation::Consistent,
        (Value(_), Value(_)) => Relation::Conflict,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompareOptions {
    pub fuel: u64,
    pub depth: usize,
    /// Inputs of the seed run.
    pub initial_inputs: (Word, Word),
    pub mem_size: u32,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { fuel: 10_000, depth: 50, initial_inputs: (1, 1), mem_size: DEFAULT_MEM_SIZE }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// Concrete program executions, counting each program separately.
    pub runs: u64,
    /// Distinct (trimmed) paths observed per program.
    pub paths_explored: [usize; 2],
    pub solver_queries: u64,
    pub unsat: u64,
    /// Solver inputs that did not drive the program down the expected path.
    pub divergences: u64,
    /// Largest number of path conditions in any recorded trace.
    pub max_depth_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub r1: Word,
    pub r2: Word,
    pub outcome_1: Outcome,
    pub outcome_2: Outcome,
    /// Program whose negated path condition produced the inputs; `None`
    /// when the seed run already disagreed.
    pub found_by: Option<Side>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Disequivalent(Counterexample),
    PossiblyEquivalent(Stats),
}

impl Verdict {
    pub fn is_disequivalent(&self) -> bool {
        matches!(self, Verdict::Disequivalent(_))
    }
}

/// One step of the exploration log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iteration {
    /// `None` for the seed run.
    pub driver: Option<Side>,
    /// The flipped path condition that was solved for.
    pub negated: Option<SymInstr>,
    /// Inputs and outcomes, absent when the query was unsatisfiable.
    pub run: Option<((Word, Word), [Outcome; 2])>,
    /// Whether the driver followed the expected path.
    pub followed: Option<bool>,
    /// Which programs had an unexplored path when the driver was chosen.
    pub frontier: [bool; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub verdict: Verdict,
    pub stats: Stats,
    pub log: Vec<Iteration>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("fuel must be positive")]
    ZeroFuel,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("counterexample ({r1:#x}, {r2:#x}) did not reproduce on re-execution")]
    Unsound { r1: Word, r2: Word },
}

type BranchKey = (Word, Rel);

#[derive(Debug, Default)]
struct Node {
    children: HashMap<BranchKey, Edge>,
    attempted: HashSet<BranchKey>,
}

#[derive(Debug)]
struct Edge {
    child: usize,
    /// Trace index and instruction position where this branch was first seen.
    first_seen: (usize, usize),
}

#[derive(Debug)]
struct Observed {
    trace: Trace,
    inputs: (Word, Word),
}

/// A flipped path condition ready to be solved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    /// SSA prefix ending in the negated condition.
    pub prefix: Trace,
    /// Inputs of the run the prefix came from; used for unbound registers.
    pub inputs: (Word, Word),
    node: usize,
    key: BranchKey,
}

impl Target {
    /// Path conditions the solved inputs are expected to follow.
    pub fn expected(&self) -> Vec<SymInstr> {
        self.prefix.path_conds().copied().collect()
    }

    pub fn negated(&self) -> SymInstr {
        *self.prefix.instrs.last().expect("prefix ends in a path condition")
    }
}

/// Prefix tree of the path-condition sequences observed for one program.
/// Branches are keyed by the branch site and the relation that held there.
#[derive(Debug)]
pub struct PathStore {
    nodes: Vec<Node>,
    observed: Vec<Observed>,
    leaves: HashSet<usize>,
}

impl Default for PathStore {
    fn default() -> Self {
        PathStore { nodes: vec![Node::default()], observed: Vec::new(), leaves: HashSet::new() }
    }
}

fn branch_key(instr: &SymInstr) -> Option<BranchKey> {
    match *instr {
        SymInstr::PathCond { rel, site, .. } => Some((site, rel)),
        _ => None,
    }
}

impl PathStore {
    pub fn new() -> PathStore {
        PathStore::default()
    }

    /// Record a transformed trace. Returns true if its path is new.
    pub fn record(&mut self, trace: Trace, inputs: (Word, Word)) -> bool {
        let index = self.observed.len();
        let mut node = 0;
        for (pos, instr) in trace.instrs.iter().enumerate() {
            let Some(key) = branch_key(instr) else { continue };
            node = match self.nodes[node].children.get(&key) {
                Some(edge) => edge.child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(key, Edge { child, first_seen: (index, pos) });
                    child
                }
            };
        }
        self.observed.push(Observed { trace, inputs });
        self.leaves.insert(node)
    }

    pub fn paths_explored(&self) -> usize {
        self.leaves.len()
    }

    fn pending_at(&self, node: usize, key: BranchKey) -> bool {
        let flipped = (key.0, key.1.negate());
        let n = &self.nodes[node];
        !n.children.contains_key(&flipped) && !n.attempted.contains(&flipped)
    }

    /// Deepest path condition along `t` whose other side has been neither
    /// observed nor attempted, flipped. `t` must have been recorded.
    pub fn next_target(&self, t: &Trace) -> Option<Target> {
        let mut node = 0;
        let mut along = Vec::new();
        for instr in &t.instrs {
            let Some(key) = branch_key(instr) else { continue };
            let Some(edge) = self.nodes[node].children.get(&key) else { break };
            along.push((node, key));
            node = edge.child;
        }
        along
            .into_iter()
            .rev()
            .find(|&(node, key)| self.pending_at(node, key))
            .map(|(node, key)| self.build_target(node, key))
    }

    fn build_target(&self, node: usize, key: BranchKey) -> Target {
        let (index, pos) = self.nodes[node].children[&key].first_seen;
        let source = &self.observed[index];
        let mut instrs = source.trace.instrs[..=pos].to_vec();
        if let Some(SymInstr::PathCond { rel, .. }) = instrs.last_mut() {
            *rel = rel.negate();
        }
        Target {
            prefix: Trace { instrs, ssa: source.trace.ssa },
            inputs: source.inputs,
            node,
            key: (key.0, key.1.negate()),
        }
    }

    /// Any pending target, searching the most recently recorded paths first.
    pub fn pending_target(&self) -> Option<Target> {
        self.observed.iter().rev().find_map(|o| self.next_target(&o.trace))
    }

    pub fn has_pending(&self) -> bool {
        self.pending_target().is_some()
    }

    pub fn mark_attempted(&mut self, target: &Target) {
        self.nodes[target.node].attempted.insert(target.key);
    }
}

fn same_branch(a: &SymInstr, b: &SymInstr) -> bool {
    match (a, b) {
        (
            SymInstr::PathCond { rel: r1, a: a1, b: b1, site: s1 },
            SymInstr::PathCond { rel: r2, a: a2, b: b2, site: s2 },
        ) => r1 == r2 && s1 == s2 && a1.loc == a2.loc && b1.loc == b2.loc,
        _ => false,
    }
}

/// True iff the path conditions of `actual` start with `expected`.
pub fn follows_expected_path(expected: &[SymInstr], actual: &Trace) -> bool {
    let mut conds = actual.path_conds();
    expected.iter().all(|want| conds.next().is_some_and(|got| same_branch(want, got)))
}

/// Keep the path conditions and the assignments they depend on. Dropping
/// the rest leaves registers that do not matter for the path out of the
/// model, so they keep their previous concrete values.
pub fn slice_to_conditions(t: &Trace) -> Trace {
    let mut needed: HashSet<Var> = HashSet::new();
    let mut needed_mem: HashSet<u32> = HashSet::new();
    let mut keep = vec![false; t.instrs.len()];
    for (pos, instr) in t.instrs.iter().enumerate().rev() {
        let wanted = match *instr {
            SymInstr::PathCond { .. } => true,
            SymInstr::Sw { mem, .. } => needed_mem.contains(&mem),
            _ => instr.def().is_some_and(|d| needed.contains(&d)),
        };
        if !wanted {
            continue;
        }
        keep[pos] = true;
        needed.extend(instr.uses());
        match *instr {
            SymInstr::Sw { mem, .. } => {
                needed_mem.insert(mem - 1);
            }
            SymInstr::Lw { mem, .. } => {
                needed_mem.insert(mem);
            }
            _ => {}
        }
    }
    let instrs = t.instrs.iter().zip(keep).filter_map(|(instr, k)| k.then_some(*instr)).collect();
    Trace { instrs, ssa: t.ssa }
}

struct Engine<'a> {
    programs: [&'a [Word]; 2],
    opts: &'a CompareOptions,
    solver: &'a Solver,
    stores: [PathStore; 2],
    last: [Trace; 2],
    stats: Stats,
    log: Vec<Iteration>,
}

impl<'a> Engine<'a> {
    fn execute(&mut self, inputs: (Word, Word)) -> [(Outcome, Trace); 2] {
        let results = self.programs.map(|p| {
            let res = run_with_memory(p, inputs.0, inputs.1, self.opts.fuel, self.opts.mem_size);
            let outcome = Outcome::from(&res);
            (outcome, transform(res.trace(), self.opts.depth))
        });
        self.stats.runs += 2;
        for (side, (_, trace)) in results.iter().enumerate() {
            self.stats.max_depth_used = self.stats.max_depth_used.max(trace.path_cond_count());
            self.stores[side].record(trace.clone(), inputs);
            self.last[side] = trace.clone();
            self.stats.paths_explored[side] = self.stores[side].paths_explored();
        }
        results
    }

    fn counterexample(
        &self,
        inputs: (Word, Word),
        outcomes: [Outcome; 2],
        found_by: Option<Side>,
    ) -> Result<Counterexample, EngineError> {
        // Re-run from scratch: the verdict must stand on concrete execution alone.
        let replay = self.programs.map(|p| {
            Outcome::from(&run_with_memory(p, inputs.0, inputs.1, self.opts.fuel, self.opts.mem_size))
        });
        if replay != outcomes || compare_outcomes(replay[0], replay[1]) != Relation::Conflict {
            return Err(EngineError::Unsound { r1: inputs.0, r2: inputs.1 });
        }
        Ok(Counterexample {
            r1: inputs.0,
            r2: inputs.1,
            outcome_1: outcomes[0],
            outcome_2: outcomes[1],
            found_by,
        })
    }

    fn finish(self, verdict: Verdict) -> Comparison {
        Comparison { verdict, stats: self.stats, log: self.log }
    }

    fn has_frontier(&self, side: Side) -> bool {
        let store = &self.stores[side.index()];
        store.next_target(&self.last[side.index()]).is_some() || store.has_pending()
    }

    fn pick_driver(&self, turn: Side) -> Option<(Side, Target)> {
        [turn, turn.other()].into_iter().find_map(|side| {
            let store = &self.stores[side.index()];
            store
                .next_target(&self.last[side.index()])
                .or_else(|| store.pending_target())
                .map(|target| (side, target))
        })
    }

    fn explore(mut self) -> Result<Comparison, EngineError> {
        let seed = self.opts.initial_inputs;
        let [(o1, _), (o2, _)] = self.execute(seed);
        self.log.push(Iteration {
            driver: None,
            negated: None,
            run: Some((seed, [o1, o2])),
            followed: None,
            frontier: [false; 2],
        });
        if compare_outcomes(o1, o2) == Relation::Conflict {
            let cex = self.counterexample(seed, [o1, o2], None)?;
            return Ok(self.finish(Verdict::Disequivalent(cex)));
        }

        let mut turn = Side::P1;
        loop {
            let frontier = [Side::P1, Side::P2].map(|side| self.has_frontier(side));
            let Some((driver, target)) = self.pick_driver(turn) else {
                break;
            };
            self.stores[driver.index()].mark_attempted(&target);
            turn = driver.other();
            self.stats.solver_queries += 1;
            log::debug!("{driver} drives: negating {}", target.negated());

            let query = slice_to_conditions(&target.prefix);
            let Some(soln) = self.solver.solve(&query)? else {
                self.stats.unsat += 1;
                self.log.push(Iteration {
                    driver: Some(driver),
                    negated: Some(target.negated()),
                    run: None,
                    followed: None,
                    frontier,
                });
                continue;
            };

            let inputs = soln.inputs(target.inputs);
            let [(o1, t1), (o2, t2)] = self.execute(inputs);
            let driven = if driver == Side::P1 { &t1 } else { &t2 };
            let followed = follows_expected_path(&target.expected(), driven);
            if !followed {
                self.stats.divergences += 1;
                log::debug!("{driver} diverged on inputs {inputs:?}");
            }
            self.log.push(Iteration {
                driver: Some(driver),
                negated: Some(target.negated()),
                run: Some((inputs, [o1, o2])),
                followed: Some(followed),
                frontier,
            });
            if compare_outcomes(o1, o2) == Relation::Conflict {
                let cex = self.counterexample(inputs, [o1, o2], Some(driver))?;
                return Ok(self.finish(Verdict::Disequivalent(cex)));
            }
        }
        let stats = self.stats.clone();
        Ok(self.finish(Verdict::PossiblyEquivalent(stats)))
    }
}

/// Compare two programs, returning the verdict together with exploration
/// statistics and the per-iteration log.
pub fn compare_detailed(
    p1: &[Word],
    p2: &[Word],
    opts: &CompareOptions,
    solver: &Solver,
) -> Result<Comparison, EngineError> {
    if opts.fuel == 0 {
        return Err(EngineError::ZeroFuel);
    }
    Engine {
        programs: [p1, p2],
        opts,
        solver,
        stores: [PathStore::new(), PathStore::new()],
        last: [Trace::default(), Trace::default()],
        stats: Stats::default(),
        log: Vec::new(),
    }
    .explore()
}

pub fn compare(
    p1: &[Word],
    p2: &[Word],
    opts: &CompareOptions,
    solver: &Solver,
) -> Result<Verdict, EngineError> {
    compare_detailed(p1, p2, opts, solver).map(|c| c.verdict)
}
