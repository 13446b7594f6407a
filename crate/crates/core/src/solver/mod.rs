//! Deterministic SAT decision procedures with measurable cost.
//!
//! The built-in [`CdclSolver`] never randomizes: it branches on the lowest
//! unassigned variable, positive polarity first, and never restarts. Its
//! decision, propagation and conflict counters are therefore identical
//! across runs on the same input. [`ExternalSolver`] shells out to any
//! DIMACS solver that prints a competition `s` line.

mod cdcl;
mod external;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, CnfError, CnfFormula};

pub use cdcl::{propagate_only, CdclConfig, CdclSolver, PropagationOutcome, PropagationResult};
pub use external::{ExternalSolver, ExternalSolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitReason {
    Conflicts,
    Time,
    CostCap,
    Cancelled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum SolveStatus {
    Sat,
    Unsat,
    /// The solve stopped early; the formula is undecided.
    Limit(LimitReason),
}

impl SolveStatus {
    pub fn is_decided(self) -> bool {
        matches!(self, SolveStatus::Sat | SolveStatus::Unsat)
    }
}

/// What one solve cost. Deterministic counters are `None` for backends that
/// cannot report them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveCost {
    pub wall_seconds: f64,
    pub decisions: Option<u64>,
    pub propagations: Option<u64>,
    pub conflicts: Option<u64>,
}

impl SolveCost {
    /// The cost in units of `metric`, or `None` if the backend does not
    /// measure it.
    pub fn value(&self, metric: CostMetric) -> Option<f64> {
        match metric {
            CostMetric::WallTime => Some(self.wall_seconds),
            CostMetric::Decisions => self.decisions.map(|d| d as f64),
            CostMetric::Propagations => self.propagations.map(|p| p as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    #[default]
    WallTime,
    Decisions,
    Propagations,
}

impl CostMetric {
    pub fn name(self) -> &'static str {
        match self {
            CostMetric::WallTime => "wall_time",
            CostMetric::Decisions => "decisions",
            CostMetric::Propagations => "propagations",
        }
    }

    /// True for the replayable solver counters.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, CostMetric::WallTime)
    }
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "wall_time" | "wall" | "time" | "seconds" => Ok(CostMetric::WallTime),
            "decisions" => Ok(CostMetric::Decisions),
            "propagations" => Ok(CostMetric::Propagations),
            other => Err(format!("unknown cost metric `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// `model[v - 1]` is the value of variable `v`; present for SAT results
    /// whenever the backend reports one.
    pub model: Option<Vec<bool>>,
    pub cost: SolveCost,
}

/// A broadcast cancellation flag shared between a coordinator and workers.
/// A child token is cancelled by its own flag or by its parent's.
#[derive(Clone, Debug, Default)]
pub struct CancelToken {
    own: Arc<AtomicBool>,
    parent: Option<Box<CancelToken>>,
}

impl CancelToken {
    pub fn new() -> CancelToken {
        CancelToken::default()
    }

    /// A token that also observes `self`, but whose own cancellation does
    /// not propagate upwards.
    pub fn child(&self) -> CancelToken {
        CancelToken {
            own: Arc::new(AtomicBool::new(false)),
            parent: Some(Box::new(self.clone())),
        }
    }

    pub fn cancel(&self) {
        self.own.store(true, Ordering::Release);
    }

    pub fn is_cancelled(&self) -> bool {
        self.own.load(Ordering::Acquire) || self.parent.as_ref().is_some_and(|p| p.is_cancelled())
    }
}

/// Per-solve stopping conditions. Any of them yields a `Limit` status.
#[derive(Clone, Debug, Default)]
pub struct SolveLimits {
    pub max_conflicts: Option<u64>,
    /// Stop once the running cost in this metric exceeds the value.
    pub cost_cap: Option<(CostMetric, f64)>,
    pub deadline: Option<Instant>,
    pub cancel: Option<CancelToken>,
}

impl SolveLimits {
    pub fn none() -> SolveLimits {
        SolveLimits::default()
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid assumptions: {0}")]
    InvalidAssumptions(#[from] CnfError),
    #[error("failed to run external solver: {0}")]
    Subprocess(#[from] std::io::Error),
    #[error("unparsable solver output: {0}")]
    UnparsableOutput(String),
    #[error("external solver reported a model that violates the formula")]
    InvalidModel,
    #[error("empty solver command")]
    EmptyCommand,
}

/// A complete SAT procedure. Instances are single-threaded; use a
/// [`SolverFactory`] to give every worker its own.
pub trait Solver {
    fn solve(
        &mut self,
        formula: &CnfFormula,
        assumptions: &Assignment,
        limits: &SolveLimits,
    ) -> Result<SolveResult, SolveError>;
}

pub trait SolverFactory: Send + Sync {
    fn create(&self) -> Box<dyn Solver + Send>;

    /// Whether repeated solves of the same input report identical
    /// deterministic counters.
    fn reports_counters(&self) -> bool {
        true
    }
}
