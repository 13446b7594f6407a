use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{LimitReason, SolveCost, SolveError, SolveLimits, SolveResult, SolveStatus, Solver, SolverFactory};
use crate::cnf::{Assignment, CnfFormula};

const POLL_INTERVAL: Duration = Duration::from_millis(2);

/// How to invoke an external DIMACS solver.
///
/// `command` is split on whitespace; a `{}` argument is replaced by the
/// DIMACS file path, otherwise the path is appended as the last argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSolverConfig {
    pub command: String,
    pub timeout: Option<Duration>,
}

impl SolverFactory for ExternalSolverConfig {
    fn create(&self) -> Box<dyn Solver + Send> {
        Box::new(ExternalSolver::new(self.clone()))
    }

    fn reports_counters(&self) -> bool {
        false
    }
}

/// Adapter around a subprocess solver. Assumptions are applied by
/// substitution before the formula is written out; only wall time is
/// measured.
#[derive(Clone, Debug)]
pub struct ExternalSolver {
    config: ExternalSolverConfig,
}

impl ExternalSolver {
    pub fn new(config: ExternalSolverConfig) -> ExternalSolver {
        ExternalSolver { config }
    }

    fn command(&self, path: &str) -> Result<Command, SolveError> {
        let mut parts = self.config.command.split_whitespace();
        let program = parts.next().ok_or(SolveError::EmptyCommand)?;
        let mut cmd = Command::new(program);
        let mut placed = false;
        for arg in parts {
            if arg == "{}" {
                cmd.arg(path);
                placed = true;
            } else {
                cmd.arg(arg);
            }
        }
        if !placed {
            cmd.arg(path);
        }
        Ok(cmd)
    }
}

impl Solver for ExternalSolver {
    fn solve(
        &mut self,
        formula: &CnfFormula,
        assumptions: &Assignment,
        limits: &SolveLimits,
    ) -> Result<SolveResult, SolveError> {
        let reduced = formula.substitute(assumptions)?;
        let mut file = tempfile::Builder::new().prefix("satpart-").suffix(".cnf").tempfile()?;
        reduced.write_dimacs(std::io::BufWriter::new(file.as_file_mut()))?;
        file.as_file_mut().flush()?;
        let path = file.path().to_string_lossy().into_owned();

        let mut child = self
            .command(&path)?
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });

        let start = Instant::now();
        let mut deadline = self.config.timeout.map(|t| (start + t, LimitReason::Time));
        if let Some(d) = limits.deadline {
            if deadline.is_none_or(|(cur, _)| d < cur) {
                deadline = Some((d, LimitReason::Time));
            }
        }
        let mut stopped: Option<LimitReason> = None;
        loop {
            if child.try_wait()?.is_some() {
                break;
            }
            if limits.cancel.as_ref().is_some_and(|c| c.is_cancelled()) {
                stopped = Some(LimitReason::Cancelled);
            } else if let Some((d, reason)) = deadline {
                if Instant::now() >= d {
                    stopped = Some(reason);
                }
            }
            if stopped.is_some() {
                let _ = child.kill();
                let _ = child.wait();
                break;
            }
            thread::sleep(POLL_INTERVAL);
        }
        let elapsed = start.elapsed().as_secs_f64();
        let output = reader
            .join()
            .map_err(|_| SolveError::UnparsableOutput("output reader panicked".into()))??;

        if let Some(reason) = stopped {
            let wall_seconds = match (reason, self.config.timeout) {
                (LimitReason::Time, Some(t)) => t.as_secs_f64(),
                _ => elapsed,
            };
            return Ok(SolveResult {
                status: SolveStatus::Limit(reason),
                model: None,
                cost: SolveCost {
                    wall_seconds,
                    ..SolveCost::default()
                },
            });
        }

        let (status, values) = parse_solver_output(&output)?;
        let model = match (status, values) {
            (SolveStatus::Sat, Some(values)) => {
                let mut model = vec![false; formula.num_vars() as usize];
                for lit in values {
                    let v = lit.unsigned_abs() as usize;
                    if v >= 1 && v <= model.len() {
                        model[v - 1] = lit > 0;
                    }
                }
                for &(v, b) in assumptions.pairs() {
                    model[v as usize - 1] = b;
                }
                if !formula.is_satisfied_by(&model) {
                    return Err(SolveError::InvalidModel);
                }
                Some(model)
            }
            _ => None,
        };
        Ok(SolveResult {
            status,
            model,
            cost: SolveCost {
                wall_seconds: elapsed,
                ..SolveCost::default()
            },
        })
    }
}

/// Reads the first `s` line and any `v` lines of competition-format output.
pub(crate) fn parse_solver_output(text: &str) -> Result<(SolveStatus, Option<Vec<i64>>), SolveError> {
    let status_line = text
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with("s "))
        .ok_or_else(|| SolveError::UnparsableOutput(truncate(text)))?;
    let status = match status_line[2..].trim() {
        "SATISFIABLE" => SolveStatus::Sat,
        "UNSATISFIABLE" => SolveStatus::Unsat,
        "UNKNOWN" | "INDETERMINATE" => SolveStatus::Limit(LimitReason::Time),
        _ => return Err(SolveError::UnparsableOutput(truncate(status_line))),
    };
    let mut values = Vec::new();
    let mut any = false;
    for line in text.lines().map(str::trim).filter(|l| l.starts_with("v ")) {
        any = true;
        for tok in line[2..].split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| SolveError::UnparsableOutput(truncate(line)))?;
            if lit != 0 {
                values.push(lit);
            }
        }
    }
    Ok((status, any.then_some(values)))
}

fn truncate(s: &str) -> String {
    let s = s.trim();
    if s.len() > 120 {
        format!("{}...", &s[..s.char_indices().nth(120).map_or(s.len(), |(i, _)| i)])
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_status_lines() {
        let (s, v) = parse_solver_output("c hello\ns SATISFIABLE\nv 1 -2\nv 3 0\n").unwrap();
        assert_eq!(s, SolveStatus::Sat);
        assert_eq!(v, Some(vec![1, -2, 3]));
        let (s, v) = parse_solver_output("s UNSATISFIABLE\n").unwrap();
        assert_eq!(s, SolveStatus::Unsat);
        assert_eq!(v, None);
    }

    #[test]
    fn garbage_is_unparsable() {
        let err = parse_solver_output("segmentation fault\n").unwrap_err();
        assert!(err.to_string().starts_with("unparsable solver output"));
        assert!(parse_solver_output("s MAYBE\n").is_err());
    }

    #[test]
    fn placeholder_substitution() {
        let s = ExternalSolver::new(ExternalSolverConfig {
            command: "solver --in {} -q".into(),
            timeout: None,
        });
        let cmd = s.command("/tmp/x.cnf").unwrap();
        let args: Vec<_> = cmd.get_args().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(args, vec!["--in", "/tmp/x.cnf", "-q"]);
    }
}
