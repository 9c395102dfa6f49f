//! External solver process spoken to over SMT-LIB v2 on stdin/stdout.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{emit_formula, parse_all, EmitError, Formula, Model, ModelError, Sexp, Soln};
use crate::trace::Trace;

/// Environment variable consulted for the solver binary.
pub const SOLVER_ENV: &str = "DISEQ_SOLVER";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("failed to start solver `{path}`: {source}")]
    Spawn { path: String, source: std::io::Error },
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver timed out after {0:?}")]
    Timeout(Duration),
    #[error("solver exited abnormally ({status}): {stderr}")]
    Crashed { status: String, stderr: String },
    #[error("solver answered `unknown`")]
    Unknown,
    #[error("unparseable solver output: {0}")]
    Unparseable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl SolverConfig {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    /// Config for a solver binary, with the flags it needs to read a script
    /// from stdin inferred from its file name.
    pub fn for_program(program: impl Into<PathBuf>) -> SolverConfig {
        let program = program.into();
        let name = program.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
        let args: &[&str] = if name.starts_with("z3") {
            &["-in", "-smt2"]
        } else if name.starts_with("cvc") {
            &["--lang=smt2"]
        } else if name.starts_with("bitwuzla") || name.starts_with("boolector") {
            &["--lang", "smt2"]
        } else {
            &[]
        };
        SolverConfig {
            program,
            args: args.iter().map(|s| s.to_string()).collect(),
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    /// `$DISEQ_SOLVER` if set, `z3` from `PATH` otherwise.
    pub fn from_env() -> SolverConfig {
        let program = std::env::var_os(SOLVER_ENV)
            .filter(|p| !p.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("z3"));
        Self::for_program(program)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn program(&self) -> &Path {
        &self.program
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::from_env()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckResult {
    Sat(Model),
    Unsat,
}

/// Runs one solver process per query.
#[derive(Clone, Debug, Default)]
pub struct Solver {
    config: SolverConfig,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Solver {
        Solver { config }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Emit, solve and project the model onto the inputs. `None` means
    /// unsatisfiable.
    pub fn solve(&self, t: &Trace) -> Result<Option<Soln>, SolverError> {
        let formula = emit_formula(t)?;
        Ok(match self.check(&formula)? {
            CheckResult::Sat(model) => Some(Soln::from_model(&model)),
            CheckResult::Unsat => None,
        })
    }

    pub fn check(&self, formula: &Formula) -> Result<CheckResult, SolverError> {
        let output = self.run_script(&formula.script())?;
        interpret_response(&output)
    }

    fn run_script(&self, script: &str) -> Result<String, SolverError> {
        let mut child = Command::new(&self.config.program)
            .args(&self.config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                path: self.config.program.display().to_string(),
                source,
            })?;
        log::trace!("solver script:\n{script}");

        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let out_reader = thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // A solver that dies early closes its stdin; the exit status
            // below reports that case.
            let _ = stdin.write_all(script.as_bytes());
            let _ = stdin.write_all(b"(exit)\n");
        }

        let deadline = Instant::now() + self.config.timeout;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SolverError::Timeout(self.config.timeout));
            }
            thread::sleep(Duration::from_millis(1));
        };
        let output =
            out_reader.join().map_err(|_| SolverError::Unparseable("stdout reader panicked".into()))??;
        let errors = err_reader.join().unwrap_or_default();
        log::trace!("solver output:\n{output}");

        // z3 exits nonzero when (get-model) follows unsat; only treat the
        // status as a crash when there is no usable answer.
        let answered =
            output.split_whitespace().next().is_some_and(|w| matches!(w, "sat" | "unsat" | "unknown"));
        if !status.success() && !answered {
            return Err(SolverError::Crashed {
                status: status.to_string(),
                stderr: if errors.is_empty() { output } else { errors },
            });
        }
        Ok(output)
    }
}

/// Interpret the output of a script ending in `(check-sat) (get-model)`.
pub(crate) fn interpret_response(output: &str) -> Result<CheckResult, SolverError> {
    let items = parse_all(output).map_err(SolverError::Unparseable)?;
    // Skip `success` acknowledgements some solvers print for commands.
    let mut items = items.iter().skip_while(|s| s.as_atom() == Some("success"));
    match items.next() {
        Some(Sexp::Atom(a)) if a == "unsat" => Ok(CheckResult::Unsat),
        Some(Sexp::Atom(a)) if a == "unknown" => Err(SolverError::Unknown),
        Some(Sexp::Atom(a)) if a == "sat" => {
            let model = items.next().ok_or_else(|| SolverError::Unparseable("sat without a model".into()))?;
            if is_error(model) {
                return Err(SolverError::Unparseable(model.to_string()));
            }
            let mut parsed = Model::new();
            super::collect_model(std::slice::from_ref(model), &mut parsed)?;
            Ok(CheckResult::Sat(parsed))
        }
        Some(other) => Err(SolverError::Unparseable(other.to_string())),
        None => Err(SolverError::Unparseable("empty output".into())),
    }
}

fn is_error(s: &Sexp) -> bool {
    matches!(s.as_list(), Some([head, ..]) if head.as_atom() == Some("error"))
}
