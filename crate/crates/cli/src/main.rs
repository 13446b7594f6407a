use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use satpart::cipher::{encode, hex_to_bits, make_weakened, reference_keystream, Family, GeneratorSpec};
use satpart::cnf::{parse_dimacs, Assignment};
use satpart::decomposition::DecompositionSet;
use satpart::orchestrator::{
    execute, generator_instance, InputSource, Mode, RunConfig, RunOutcome, SolverChoice, ENV_TIME_LIMIT, ENV_WORKERS,
};
use satpart::predictive::{LimitPolicy, PredictiveEstimate};
use satpart::solver::{CdclSolver, CostMetric, SolveLimits, SolveStatus, Solver};
use satpart::tabu::{verify_supbs, SearchReport};

#[derive(Parser)]
#[command(
    name = "satpart",
    version,
    about = "Estimate SAT partitioning cost and search for good decomposition sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the predictive function for one decomposition set.
    Estimate(EstimateArgs),
    /// Tabu search for a decomposition set with a small predictive value.
    Search(SearchArgs),
    /// Exact total cost over the whole decomposition family.
    Oracle(OracleArgs),
    /// Emit a cipher instance as DIMACS plus a JSON sidecar.
    Encode(EncodeArgs),
    /// Check that unit propagation decides the formula under random
    /// assignments of a variable set.
    VerifySupbs(VerifyArgs),
    /// Solve a DIMACS file with the built-in solver (competition output).
    Solve(SolveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    #[value(name = "a5_1", alias = "a51")]
    A51,
    Bivium,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::A51 => Family::A51,
            FamilyArg::Bivium => Family::Bivium,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// DIMACS CNF input.
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    cnf: Option<PathBuf>,
    /// Build a cipher instance instead of reading a file.
    #[arg(long, value_enum)]
    generator: Option<FamilyArg>,
    /// Weakened register lengths, e.g. 5,6,7.
    #[arg(long, value_delimiter = ',', requires = "generator")]
    lengths: Option<Vec<usize>>,
    #[arg(long, requires = "generator")]
    keystream_len: Option<usize>,
    /// Seed for the random secret state of a generated instance.
    #[arg(long, default_value_t = 0, requires = "generator")]
    state_seed: u64,
}

impl InputArgs {
    fn source(&self) -> InputSource {
        match (&self.cnf, self.generator) {
            (Some(path), _) => InputSource::Cnf { path: path.clone() },
            (None, Some(family)) => InputSource::Generator {
                family: family.into(),
                lengths: self.lengths.clone(),
                keystream_len: self.keystream_len,
                state_seed: self.state_seed,
            },
            (None, None) => unreachable!("clap requires one input"),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Sample size N.
    #[arg(long = "n", default_value_t = 10_000)]
    sample_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.999)]
    gamma: f64,
    /// wall_time, decisions or propagations.
    #[arg(long, default_value = "wall_time")]
    metric: CostMetric,
    #[arg(long, env = ENV_WORKERS, default_value_t = 1)]
    workers: usize,
    /// Seconds.
    #[arg(long, env = ENV_TIME_LIMIT)]
    time_limit: Option<f64>,
    /// External solver command; `{}` is replaced by the DIMACS path.
    #[arg(long)]
    solver_cmd: Option<String>,
    /// Per-solve timeout for the external solver, in seconds.
    #[arg(long, requires = "solver_cmd")]
    solver_timeout: Option<f64>,
    /// Conflict limit per solve for the built-in solver.
    #[arg(long, conflicts_with = "solver_cmd")]
    max_conflicts: Option<u64>,
    /// Count solves that hit a limit at the cost reached instead of failing.
    #[arg(long)]
    censor_limits: bool,
    /// Directory for config.json, estimates.jsonl, report.json and log.csv.
    #[arg(long, alias = "report")]
    output: Option<PathBuf>,
}

impl CommonArgs {
    fn config(&self, input: InputSource, mode: Mode, vars: Option<DecompositionSet>) -> RunConfig {
        let mut c = RunConfig::new(input, mode);
        c.vars = vars;
        c.sample_size = self.sample_size;
        c.seed = self.seed;
        c.gamma = self.gamma;
        c.metric = self.metric;
        c.workers = self.workers;
        c.time_limit_seconds = self.time_limit;
        c.limit_policy = if self.censor_limits {
            LimitPolicy::CountAsCap
        } else {
            LimitPolicy::Abort
        };
        c.solver = match &self.solver_cmd {
            Some(command) => SolverChoice::External {
                command: command.clone(),
                timeout_seconds: self.solver_timeout,
            },
            None => SolverChoice::Builtin {
                max_conflicts: self.max_conflicts,
            },
        };
        c.output_dir = self.output.clone();
        c
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Decomposition set, comma separated (empty string for the empty set).
    #[arg(long, value_parser = parse_vars)]
    vars: DecompositionSet,
    /// Interrupt once the estimate provably exceeds this value.
    #[arg(long)]
    best_known: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Starting set (default: the generator state, else all variables).
    #[arg(long, value_parser = parse_vars)]
    vars: Option<DecompositionSet>,
    #[arg(long, default_value_t = 1)]
    rho: usize,
    /// Interruption threshold for points evaluated before any best value.
    #[arg(long)]
    point_budget: Option<f64>,
    /// Only search subsets of the starting set.
    #[arg(long)]
    restrict: bool,
    #[arg(long)]
    max_evaluations: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_vars)]
    vars: DecompositionSet,
    #[arg(long, default_value = "wall_time")]
    metric: CostMetric,
    /// Refuse sets larger than this.
    #[arg(long, default_value_t = 30)]
    max_d: usize,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long)]
    keystream_len: Option<usize>,
    /// Secret state as hex (first bit is the MSB of the first byte).
    #[arg(long, conflicts_with = "state_seed")]
    state: Option<String>,
    #[arg(long, default_value_t = 0)]
    state_seed: u64,
    /// DIMACS output path; the sidecar goes next to it with a .json suffix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Candidate set (default: the generator state variables).
    #[arg(long, value_parser = parse_vars)]
    vars: Option<DecompositionSet>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    cnf: PathBuf,
}

/// Comma-separated indices and inclusive ranges, e.g. `1,4-7,10`.
fn parse_vars(s: &str) -> Result<DecompositionSet, String> {
    let index = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| format!("`{t}` is not a variable index"))
    };
    let mut vars = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (index(a)?, index(b)?);
                if a > b {
                    return Err(format!("empty range `{tok}`"));
                }
                vars.extend(a..=b);
            }
            None => vars.push(index(tok)?),
        }
    }
    DecompositionSet::new(vars).map_err(|e| e.to_string())
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn estimate_table(e: &PredictiveEstimate) -> String {
    let mut s = format!(
        "{:>4} {:>7} {:>12} {:>12} {:>12} {:>12} {:>14}  {}\n",
        "d", "N", "Min", "Max", "Avg", "s^2", "F", "status"
    );
    s.push_str(&format!(
        "{:>4} {:>7} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>14.5e}  {:?}\n",
        e.d,
        e.n,
        e.min,
        e.max,
        e.mean,
        e.s2.unwrap_or(f64::NAN),
        e.value,
        e.status
    ));
    if let Some(h) = e.ci_half_width {
        let h = h * 2f64.powi(e.d as i32);
        s.push_str(&format!(
            "F interval at gamma={}: [{:.5e}, {:.5e}]\n",
            e.gamma,
            e.value - h,
            e.value + h
        ));
    }
    s
}

fn search_table(r: &SearchReport) -> String {
    format!(
        "{:>10} {:>12} {:>8} {:>8}\n{:>10} {:>12} {:>8} {:>8}\nbest F = {:.5e}, d = {}, stop: {:?}\n",
        "completed",
        "interrupted",
        "L1",
        "L2",
        r.counters.completed,
        r.counters.interrupted,
        r.counters.l1,
        r.counters.l2,
        r.best_value,
        r.best_set.as_ref().map_or(0, |s| s.len()),
        r.stop_reason
    )
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match cli.command {
        Command::Estimate(a) => {
            let mut cfg = a.common.config(a.input.source(), Mode::Estimate, Some(a.vars));
            cfg.point_budget = a.best_known;
            let record = execute(&cfg).map_err(|e| err(&e))?;
            let RunOutcome::Estimate(e) = &record.outcome else {
                unreachable!()
            };
            print_json(e);
            eprint!("{}", estimate_table(e));
        }
        Command::Search(a) => {
            let mut cfg = a.common.config(a.input.source(), Mode::Search, a.vars);
            cfg.rho = a.rho;
            cfg.point_budget = a.point_budget;
            cfg.restrict_to_initial = a.restrict;
            cfg.max_evaluations = a.max_evaluations;
            let record = execute(&cfg).map_err(|e| err(&e))?;
            let RunOutcome::Search(r) = &record.outcome else {
                unreachable!()
            };
            print_json(&serde_json::json!({
                "best_set": r.best_set,
                "best_chi": r.best_chi,
                "best_value": r.best_value,
                "stop_reason": r.stop_reason,
                "iterations": r.iterations,
                "counters": r.counters,
                "evaluations": r.log.len(),
                "elapsed_seconds": r.elapsed_seconds,
            }));
            eprint!("{}", search_table(r));
        }
        Command::Oracle(a) => {
            let mut cfg = RunConfig::new(a.input.source(), Mode::Oracle);
            cfg.vars = Some(a.vars);
            cfg.metric = a.metric;
            cfg.max_enumeration_d = a.max_d;
            let record = execute(&cfg).map_err(|e| err(&e))?;
            if let RunOutcome::Oracle { d, metric, total } = record.outcome {
                print_json(&serde_json::json!({"d": d, "metric": metric, "total": total}));
            }
        }
        Command::Encode(a) => {
            let family: Family = a.family.into();
            let (inst, _) = match &a.state {
                None => generator_instance(family, a.lengths.as_deref(), a.keystream_len, a.state_seed)
                    .map_err(|e| err(&e))?,
                Some(hex) => {
                    let standard = GeneratorSpec::standard(family);
                    let len = a.keystream_len.unwrap_or(standard.keystream_len);
                    let spec = match &a.lengths {
                        Some(l) => make_weakened(family, l, len),
                        None => standard.with_keystream_len(len),
                    }
                    .map_err(|e| err(&e))?;
                    let state = hex_to_bits(hex, spec.state_bits())
                        .ok_or_else(|| format!("state must be hex of at least {} bits", spec.state_bits()))?;
                    let ks = reference_keystream(&spec, &state).map_err(|e| err(&e))?;
                    (encode(&spec, &ks).map_err(|e| err(&e))?, state)
                }
            };
            let write_err = |p: &PathBuf, e: std::io::Error| format!("cannot write {}: {e}", p.display());
            let mut file = fs::File::create(&a.out).map_err(|e| write_err(&a.out, e))?;
            inst.cnf
                .write_dimacs(std::io::BufWriter::new(&mut file))
                .map_err(|e| write_err(&a.out, e))?;
            let sidecar = a.out.with_extension("json");
            fs::write(
                &sidecar,
                serde_json::to_string_pretty(&inst.sidecar()).expect("serializable") + "\n",
            )
            .map_err(|e| write_err(&sidecar, e))?;
            eprintln!(
                "{}: {} variables, {} clauses; sidecar {}",
                a.out.display(),
                inst.cnf.num_vars(),
                inst.cnf.num_clauses(),
                sidecar.display()
            );
        }
        Command::VerifySupbs(a) => {
            let input = satpart::orchestrator::load_input(&a.input.source()).map_err(|e| err(&e))?;
            let vars = match (a.vars, &input.instance) {
                (Some(v), _) => v,
                (None, Some(inst)) => inst.state_vars.clone(),
                (None, None) => return Err("--vars is required for a CNF input".into()),
            };
            let check = verify_supbs(&input.formula, &vars, a.trials, a.seed).map_err(|e| err(&e))?;
            print_json(&serde_json::json!({
                "vars": vars,
                "trials": check.trials,
                "satisfied": check.satisfied,
                "conflicts": check.conflicts,
            }));
            if check.satisfied + check.conflicts < check.trials {
                return Err(format!(
                    "unit propagation left {} of {} trials undecided",
                    check.trials - check.satisfied - check.conflicts,
                    check.trials
                ));
            }
        }
        Command::Solve(a) => {
            let bytes = fs::read(&a.cnf).map_err(|e| format!("cannot read {}: {e}", a.cnf.display()))?;
            let parsed = parse_dimacs(&bytes).map_err(|e| err(&e))?;
            let r = CdclSolver::default()
                .solve(&parsed.formula, &Assignment::empty(), &SolveLimits::none())
                .map_err(|e| err(&e))?;
            let mut out = std::io::stdout().lock();
            let io = |e: std::io::Error| e.to_string();
            // competition convention: 10 for SAT, 20 for UNSAT
            match (r.status, r.model) {
                (SolveStatus::Sat, Some(model)) => {
                    writeln!(out, "s SATISFIABLE").map_err(io)?;
                    let lits: Vec<String> = model
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| if b { format!("{}", i + 1) } else { format!("-{}", i + 1) })
                        .collect();
                    writeln!(out, "v {} 0", lits.join(" ")).map_err(io)?;
                    return Ok(ExitCode::from(10));
                }
                (SolveStatus::Unsat, _) => {
                    writeln!(out, "s UNSATISFIABLE").map_err(io)?;
                    return Ok(ExitCode::from(20));
                }
                _ => writeln!(out, "s UNKNOWN").map_err(io)?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
