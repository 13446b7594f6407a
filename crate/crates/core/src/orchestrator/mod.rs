//! Run configuration, the worker pool, and run persistence.
//!
//! A run directory holds `config.json`, `estimates.jsonl` (one line per
//! evaluated point), `report.json` and `log.csv`.

mod evaluator;
mod pool;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evaluator::{PointEvaluation, SampledEvaluator};
pub use pool::{evaluate_parallel, PoolStats, WorkerStats};

use crate::cipher::{encode, make_weakened, reference_keystream, CipherError, CryptoInstance, Family, GeneratorSpec};
use crate::cnf::{parse_dimacs, CnfFormula, DimacsError, DimacsWarning};
use crate::decomposition::{DecompositionSet, DEFAULT_ENUMERATION_BUDGET};
use crate::predictive::{
    exhaustive_total, EstimateError, EstimateOptions, LimitPolicy, PredictiveEstimate, DEFAULT_GAMMA,
    DEFAULT_SAMPLE_SIZE,
};
use crate::solver::{CdclConfig, CostMetric, ExternalSolverConfig, SolverFactory};
use crate::tabu::{run_search, SearchConfig, SearchError, SearchReport};

pub const ENV_WORKERS: &str = "SATPART_WORKERS";
pub const ENV_TIME_LIMIT: &str = "SATPART_TIME_LIMIT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Dimacs { path: PathBuf, source: DimacsError },
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Estimate,
    Search,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Cnf {
        path: PathBuf,
    },
    /// A cipher instance built from a random secret state drawn from
    /// `state_seed`.
    Generator {
        family: Family,
        #[serde(default)]
        lengths: Option<Vec<usize>>,
        #[serde(default)]
        keystream_len: Option<usize>,
        state_seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverChoice {
    Builtin {
        #[serde(default)]
        max_conflicts: Option<u64>,
    },
    External {
        command: String,
        #[serde(default)]
        timeout_seconds: Option<f64>,
    },
}

impl SolverChoice {
    pub fn factory(&self) -> Box<dyn SolverFactory> {
        match self {
            SolverChoice::Builtin { max_conflicts } => Box::new(CdclConfig {
                max_conflicts: *max_conflicts,
            }),
            SolverChoice::External {
                command,
                timeout_seconds,
            } => Box::new(ExternalSolverConfig {
                command: command.clone(),
                timeout: timeout_seconds.map(Duration::from_secs_f64),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSource,
    pub mode: Mode,
    /// Decomposition set to estimate, or the starting point of a search
    /// (default: the generator's state variables, else all variables).
    pub vars: Option<DecompositionSet>,
    #[serde(rename = "N")]
    pub sample_size: usize,
    pub seed: u64,
    pub gamma: f64,
    pub rho: usize,
    pub metric: CostMetric,
    pub workers: usize,
    pub time_limit_seconds: Option<f64>,
    /// Interruption threshold for points evaluated before any best value.
    pub point_budget: Option<f64>,
    pub restrict_to_initial: bool,
    pub max_evaluations: Option<usize>,
    pub limit_policy: LimitPolicy,
    pub solver: SolverChoice,
    pub max_enumeration_d: usize,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: InputSource, mode: Mode) -> RunConfig {
        RunConfig {
            input,
            mode,
            vars: None,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            gamma: DEFAULT_GAMMA,
            rho: 1,
            metric: CostMetric::WallTime,
            workers: 1,
            time_limit_seconds: None,
            point_budget: None,
            restrict_to_initial: false,
            max_evaluations: None,
            limit_policy: LimitPolicy::Abort,
            solver: SolverChoice::Builtin { max_conflicts: None },
            max_enumeration_d: DEFAULT_ENUMERATION_BUDGET,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.sample_size < 2 {
            return bad(format!("N must be at least 2, got {}", self.sample_size));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie strictly between 0 and 1, got {}", self.gamma));
        }
        if self.rho == 0 {
            return bad("rho must be at least 1".into());
        }
        if let Some(t) = self.time_limit_seconds {
            if t.is_nan() || t <= 0.0 {
                return bad(format!("time limit must be positive, got {t}"));
            }
        }
        if self.point_budget.is_some_and(|b| b.is_nan() || b <= 0.0) {
            return bad("point budget must be positive".into());
        }
        if self.mode != Mode::Search && self.vars.is_none() {
            return bad(format!("{:?} mode needs a decomposition set", self.mode));
        }
        Ok(())
    }

    /// Applies `SATPART_WORKERS` / `SATPART_TIME_LIMIT` from `lookup`.
    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), RunError> {
        if let Some(w) = lookup(ENV_WORKERS) {
            self.workers = w
                .trim()
                .parse()
                .map_err(|_| RunError::Config(format!("{ENV_WORKERS}={w} is not a worker count")))?;
        }
        if let Some(t) = lookup(ENV_TIME_LIMIT) {
            let secs: f64 = t
                .trim()
                .parse()
                .map_err(|_| RunError::Config(format!("{ENV_TIME_LIMIT}={t} is not a number of seconds")))?;
            self.time_limit_seconds = Some(secs);
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), RunError> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            metric: self.metric,
            gamma: self.gamma,
            limit_policy: self.limit_policy,
            ..EstimateOptions::default()
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            rho: self.rho,
            seed: self.seed,
            time_limit: self.time_limit_seconds.map(Duration::from_secs_f64),
            point_budget: self.point_budget,
            restrict_to_initial: self.restrict_to_initial,
            max_evaluations: self.max_evaluations,
        }
    }
}

pub struct LoadedInput {
    pub formula: CnfFormula,
    pub instance: Option<CryptoInstance>,
    pub warnings: Vec<DimacsWarning>,
}

/// Builds the cipher instance described by a generator input.
pub fn generator_instance(
    family: Family,
    lengths: Option<&[usize]>,
    keystream_len: Option<usize>,
    state_seed: u64,
) -> Result<(CryptoInstance, Vec<bool>), CipherError> {
    let standard = GeneratorSpec::standard(family);
    let spec = match lengths {
        Some(l) => make_weakened(family, l, keystream_len.unwrap_or(standard.keystream_len))?,
        None => standard.with_keystream_len(keystream_len.unwrap_or(standard.keystream_len))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(state_seed);
    let state: Vec<bool> = (0..spec.state_bits()).map(|_| rng.random()).collect();
    let ks = reference_keystream(&spec, &state)?;
    Ok((encode(&spec, &ks)?, state))
}

pub fn load_input(input: &InputSource) -> Result<LoadedInput, RunError> {
    match input {
        InputSource::Cnf { path } => {
            let bytes = fs::read(path).map_err(|source| RunError::Read {
                path: path.clone(),
                source,
            })?;
            let parsed = parse_dimacs(&bytes).map_err(|source| RunError::Dimacs {
                path: path.clone(),
                source,
            })?;
            Ok(LoadedInput {
                formula: parsed.formula,
                instance: None,
                warnings: parsed.warnings,
            })
        }
        InputSource::Generator {
            family,
            lengths,
            keystream_len,
            state_seed,
        } => {
            let (inst, _) = generator_instance(*family, lengths.as_deref(), *keystream_len, *state_seed)?;
            Ok(LoadedInput {
                formula: inst.cnf.clone(),
                instance: Some(inst),
                warnings: Vec::new(),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "result", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunOutcome {
    Estimate(PredictiveEstimate),
    Search(SearchReport),
    Oracle { d: usize, metric: CostMetric, total: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub outcome: RunOutcome,
    pub pool: PoolStats,
    #[serde(skip)]
    pub evaluations: Vec<PointEvaluation>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Executes a run. Writes the output directory when one is configured.
pub fn execute(config: &RunConfig) -> Result<RunRecord, RunError> {
    config.validate()?;
    let started_at = unix_now();
    let input = load_input(&config.input)?;
    let formula = &input.formula;
    let factory = config.solver.factory();
    let mut evaluator = SampledEvaluator::new(
        formula,
        factory.as_ref(),
        config.sample_size,
        config.seed,
        config.workers,
        config.estimate_options(),
    );
    if config.mode == Mode::Estimate {
        evaluator.options.deadline = config
            .time_limit_seconds
            .map(|t| Instant::now() + Duration::from_secs_f64(t));
    }
    let outcome = match config.mode {
        Mode::Estimate => {
            let set = config.vars.as_ref().expect("validated");
            set.check_range(formula.num_vars()).map_err(EstimateError::from)?;
            use crate::tabu::PointEvaluator;
            RunOutcome::Estimate(evaluator.evaluate(set, config.point_budget, None)?)
        }
        Mode::Search => {
            let initial = match (&config.vars, &input.instance) {
                (Some(v), _) => v.clone(),
                (None, Some(inst)) => inst.state_vars.clone(),
                (None, None) => DecompositionSet::full(formula.num_vars()),
            };
            RunOutcome::Search(run_search(
                formula,
                &initial,
                &config.search_config(),
                &mut evaluator,
                &mut (),
            )?)
        }
        Mode::Oracle => {
            let set = config.vars.as_ref().expect("validated");
            let total = exhaustive_total(
                formula,
                set,
                factory.create().as_mut(),
                config.metric,
                config.max_enumeration_d,
            )?;
            RunOutcome::Oracle {
                d: set.len(),
                metric: config.metric,
                total,
            }
        }
    };
    let record = RunRecord {
        config: config.clone(),
        started_at,
        finished_at: unix_now(),
        outcome,
        pool: evaluator.stats.clone(),
        evaluations: evaluator.history,
    };
    if let Some(dir) = &config.output_dir {
        write_run_dir(&record, dir)?;
    }
    Ok(record)
}

/// One line of `estimates.jsonl`.
pub fn estimate_line(e: &PointEvaluation) -> serde_json::Value {
    serde_json::json!({
        "vars": e.set,
        "wall_seconds": e.wall_seconds,
        "estimate": e.estimate,
        "pool": e.pool,
    })
}

fn evaluations_csv(evals: &[PointEvaluation]) -> String {
    let mut out = String::from("index,d,status,value,completed_observations,wall_seconds,abandoned,vars\n");
    for (i, e) in evals.iter().enumerate() {
        let status = if e.estimate.is_complete() {
            "COMPLETE"
        } else {
            "INTERRUPTED"
        };
        let vars: Vec<String> = e.set.vars().iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{i},{},{status},{},{},{},{},{}\n",
            e.estimate.d,
            e.estimate.value,
            e.estimate.completed,
            e.wall_seconds,
            e.estimate.abandoned,
            vars.join(" ")
        ));
    }
    out
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

pub fn write_run_dir(record: &RunRecord, dir: &Path) -> Result<(), RunError> {
    let write = |name: &str, data: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, data).map_err(|source| RunError::Write { path, source })
    };
    fs::create_dir_all(dir).map_err(|source| RunError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    write("config.json", pretty(&record.config).as_bytes())?;
    let mut lines = Vec::new();
    for e in &record.evaluations {
        writeln!(lines, "{}", estimate_line(e)).expect("writing to memory");
    }
    write("estimates.jsonl", &lines)?;
    write("report.json", pretty(record).as_bytes())?;
    let csv = match &record.outcome {
        RunOutcome::Search(r) => r.log_csv(),
        _ => evaluations_csv(&record.evaluations),
    };
    write("log.csv", csv.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let mut c = RunConfig::new(InputSource::Cnf { path: "x".into() }, Mode::Search);
        c.apply_overrides(|k| match k {
            ENV_WORKERS => Some("8".into()),
            ENV_TIME_LIMIT => Some("2.5".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.workers, 8);
        assert_eq!(c.time_limit_seconds, Some(2.5));
        assert!(c
            .apply_overrides(|k| (k == ENV_WORKERS).then(|| "many".to_string()))
            .is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(InputSource::Cnf { path: "x".into() }, Mode::Search);
        assert!(c.validate().is_ok());
        c.workers = 0;
        assert!(c.validate().is_err());
        c.workers = 1;
        c.sample_size = 1;
        assert!(c.validate().is_err());
        c.sample_size = 2;
        c.time_limit_seconds = Some(0.0);
        assert!(c.validate().is_err());
        c.time_limit_seconds = None;
        c.mode = Mode::Estimate;
        assert!(c.validate().is_err());
    }
}
