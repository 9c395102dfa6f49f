use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use diseq_core::asm::{assemble, SourceProgram};
use diseq_core::emu::{run_with_memory, DEFAULT_MEM_SIZE};
use diseq_core::engine::{compare_detailed, CompareOptions, Comparison, Outcome, Side, Stats, Verdict};
use diseq_core::smt::{Solver, SolverConfig, SOLVER_ENV};
use diseq_core::trace::transform;
use diseq_core::Word;

const EXIT_POSSIBLY_EQUIVALENT: u8 = 0;
const EXIT_DISEQUIVALENT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ENGINE: u8 = 3;

const JSON_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "diseq", version, about = "Concolic disequivalence checker for MIPS programs")]
struct Cli {
    /// Log exploration progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for inputs on which two programs disagree.
    Compare(CompareArgs),
    /// Run one program concretely and print its outcome.
    Run(RunArgs),
    /// Assemble a program to big-endian binary words.
    Asm(AsmArgs),
}

#[derive(Args)]
struct ExecArgs {
    /// Maximum number of executed instructions per run.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
    /// Initial value of $1 (decimal, negative, or 0x-hex).
    #[arg(long, default_value = "1", value_parser = parse_word, allow_hyphen_values = true)]
    r1: Word,
    /// Initial value of $2.
    #[arg(long, default_value = "1", value_parser = parse_word, allow_hyphen_values = true)]
    r2: Word,
    /// Emit machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// First program (`.asm` source or `.bin` words).
    p1: PathBuf,
    /// Second program.
    p2: PathBuf,
    #[command(flatten)]
    exec: ExecArgs,
    /// Maximum number of path conditions considered per trace.
    #[arg(long, default_value_t = 50)]
    depth: usize,
    /// SMT solver binary.
    #[arg(long, env = SOLVER_ENV, default_value = "z3")]
    solver: PathBuf,
    /// Per-query solver timeout in seconds.
    #[arg(long, default_value_t = 10)]
    solver_timeout: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Program to run (`.asm` source or `.bin` words).
    program: PathBuf,
    #[command(flatten)]
    exec: ExecArgs,
    /// Also print the recorded symbolic trace.
    #[arg(long)]
    trace: bool,
    /// Depth used for the transformed trace dump.
    #[arg(long, default_value_t = 50)]
    depth: usize,
}

#[derive(Args)]
struct AsmArgs {
    /// Assembly source file.
    program: PathBuf,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_word(text: &str) -> Result<Word, String> {
    let text = text.trim();
    let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(neg) = text.strip_prefix('-') {
        neg.parse::<u32>().ok().filter(|&n| n <= 1 << 31).map(|n| n.wrapping_neg())
    } else {
        text.parse::<u32>().ok()
    };
    parsed.ok_or_else(|| format!("`{text}` is not a 32-bit value"))
}

/// Assembly text, or raw big-endian words for `.bin` files.
fn load_program(path: &Path) -> anyhow::Result<Vec<Word>> {
    if path.extension().is_some_and(|e| e == "bin") {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        if bytes.len() % 4 != 0 {
            bail!("{}: length is not a multiple of 4 bytes", path.display());
        }
        return Ok(bytes.chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]])).collect());
    }
    let source = SourceProgram::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(assemble(&source)?)
}

fn word_json(w: Word) -> Value {
    json!({ "dec": w, "signed": w as i32, "hex": format!("{w:#010x}") })
}

fn outcome_json(o: &Outcome) -> Value {
    match o {
        Outcome::Value(w) => json!({ "kind": "value", "value": word_json(*w) }),
        Outcome::Failed(kind) => json!({ "kind": "failed", "error": kind }),
        Outcome::Timeout => json!({ "kind": "timeout" }),
    }
}

fn stats_json(s: &Stats) -> Value {
    json!({
        "runs": s.runs,
        "paths_explored": { "p1": s.paths_explored[0], "p2": s.paths_explored[1] },
        "solver_queries": s.solver_queries,
        "unsat": s.unsat,
        "divergences": s.divergences,
        "max_depth_used": s.max_depth_used,
    })
}

fn comparison_json(c: &Comparison) -> Value {
    let mut out = json!({ "version": JSON_VERSION, "stats": stats_json(&c.stats) });
    match &c.verdict {
        Verdict::Disequivalent(cex) => {
            out["verdict"] = json!("disequivalent");
            out["counterexample"] = json!({ "r1": word_json(cex.r1), "r2": word_json(cex.r2) });
            out["outcomes"] = json!({
                "p1": outcome_json(&cex.outcome_1),
                "p2": outcome_json(&cex.outcome_2),
            });
            out["found_by"] = match cex.found_by {
                Some(Side::P1) => json!("p1"),
                Some(Side::P2) => json!("p2"),
                None => json!("seed"),
            };
        }
        Verdict::PossiblyEquivalent(_) => out["verdict"] = json!("possibly_equivalent"),
    }
    out
}

fn print_comparison(c: &Comparison) {
    match &c.verdict {
        Verdict::Disequivalent(cex) => {
            println!("disequivalent");
            println!(
                "  counterexample: $1 = {} ({:#010x}), $2 = {} ({:#010x})",
                cex.r1 as i32, cex.r1, cex.r2 as i32, cex.r2
            );
            println!("  P1: {}", cex.outcome_1);
            println!("  P2: {}", cex.outcome_2);
            match cex.found_by {
                Some(side) => println!("  found by negating a path condition of {side}"),
                None => println!("  found by the initial run"),
            }
        }
        Verdict::PossiblyEquivalent(_) => println!("possibly equivalent"),
    }
    let s = &c.stats;
    println!(
        "  runs: {}, paths: {}/{}, solver queries: {} ({} unsat), divergences: {}",
        s.runs, s.paths_explored[0], s.paths_explored[1], s.solver_queries, s.unsat, s.divergences
    );
}

enum Failure {
    Usage(anyhow::Error),
    Engine(anyhow::Error),
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, Failure> {
    let p1 = load_program(&args.p1).map_err(Failure::Usage)?;
    let p2 = load_program(&args.p2).map_err(Failure::Usage)?;
    let opts = CompareOptions {
        fuel: args.exec.fuel,
        depth: args.depth,
        initial_inputs: (args.exec.r1, args.exec.r2),
        mem_size: DEFAULT_MEM_SIZE,
    };
    let solver = Solver::new(
        SolverConfig::for_program(&args.solver).with_timeout(Duration::from_secs(args.solver_timeout)),
    );
    let comparison = compare_detailed(&p1, &p2, &opts, &solver).map_err(|e| Failure::Engine(e.into()))?;
    if args.exec.json {
        println!("{}", comparison_json(&comparison));
    } else {
        print_comparison(&comparison);
    }
    Ok(if comparison.verdict.is_disequivalent() { EXIT_DISEQUIVALENT } else { EXIT_POSSIBLY_EQUIVALENT })
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let prog = load_program(&args.program).map_err(Failure::Usage)?;
    let (r1, r2) = (args.exec.r1, args.exec.r2);
    let res = run_with_memory(&prog, r1, r2, args.exec.fuel, DEFAULT_MEM_SIZE);
    let outcome = Outcome::from(&res);
    if args.exec.json {
        let mut out = json!({
            "version": JSON_VERSION,
            "inputs": { "r1": word_json(r1), "r2": word_json(r2) },
            "outcome": outcome_json(&outcome),
        });
        if args.trace {
            let lines = |t: &diseq_core::Trace| t.instrs.iter().map(|i| i.to_string()).collect::<Vec<_>>();
            out["trace"] = json!(lines(res.trace()));
            out["ssa_trace"] = json!(lines(&transform(res.trace(), args.depth)));
        }
        println!("{out}");
    } else {
        println!("{outcome}");
        if args.trace {
            println!("trace:");
            print!("{}", res.trace());
            println!("ssa trace (depth {}):", args.depth);
            print!("{}", transform(res.trace(), args.depth));
        }
    }
    Ok(EXIT_POSSIBLY_EQUIVALENT)
}

fn cmd_asm(args: &AsmArgs) -> Result<u8, Failure> {
    let words = load_program(&args.program).map_err(Failure::Usage)?;
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes()).collect();
    let written = match &args.output {
        Some(path) => std::fs::write(path, &bytes).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(&bytes).context("writing to stdout"),
    };
    written.map_err(Failure::Engine)?;
    Ok(EXIT_POSSIBLY_EQUIVALENT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Compare(args) => cmd_compare(args),
        Command::Run(args) => cmd_run(args),
        Command::Asm(args) => cmd_asm(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ENGINE)
        }
    }
}
