use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pool::{evaluate_parallel, PoolStats, WorkerStats};
use crate::cnf::CnfFormula;
use crate::decomposition::{draw_sample, point_seed, DecompositionSet};
use crate::predictive::{estimate_whole, EstimateError, EstimateOptions, PredictiveEstimate};
use crate::solver::SolverFactory;
use crate::tabu::PointEvaluator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub set: DecompositionSet,
    pub estimate: PredictiveEstimate,
    pub wall_seconds: f64,
    pub pool: PoolStats,
}

/// Monte Carlo point evaluation for the search: each decomposition set gets
/// its own sample plan seeded by [`point_seed`], so `F` at a point does not
/// depend on the order in which points are visited.
pub struct SampledEvaluator<'a> {
    formula: &'a CnfFormula,
    factory: &'a dyn SolverFactory,
    pub sample_size: usize,
    pub run_seed: u64,
    pub workers: usize,
    /// Base options; `best_known` and `deadline` are set per call.
    pub options: EstimateOptions,
    pub history: Vec<PointEvaluation>,
    pub stats: PoolStats,
}

impl<'a> SampledEvaluator<'a> {
    pub fn new(
        formula: &'a CnfFormula,
        factory: &'a dyn SolverFactory,
        sample_size: usize,
        run_seed: u64,
        workers: usize,
        options: EstimateOptions,
    ) -> SampledEvaluator<'a> {
        SampledEvaluator {
            formula,
            factory,
            sample_size,
            run_seed,
            workers: workers.max(1),
            options,
            history: Vec::new(),
            stats: PoolStats::default(),
        }
    }

    fn run(
        &self,
        set: &DecompositionSet,
        opts: &EstimateOptions,
    ) -> Result<(PredictiveEstimate, PoolStats), EstimateError> {
        if set.is_empty() {
            let t0 = Instant::now();
            let e = estimate_whole(self.formula, self.factory.create().as_mut(), opts)?;
            let stats = PoolStats {
                dispatched: 1,
                completed: e.completed,
                abandoned: 1 - e.completed,
                workers: vec![WorkerStats {
                    worker: 0,
                    solves: 1,
                    busy_seconds: t0.elapsed().as_secs_f64(),
                }],
            };
            return Ok((e, stats));
        }
        let plan = draw_sample(set, self.sample_size, point_seed(self.run_seed, set))?;
        evaluate_parallel(self.formula, &plan, self.factory, self.workers, opts)
    }
}

impl PointEvaluator for SampledEvaluator<'_> {
    fn evaluate(
        &mut self,
        set: &DecompositionSet,
        best_known: Option<f64>,
        deadline: Option<Instant>,
    ) -> Result<PredictiveEstimate, EstimateError> {
        if self.options.metric.is_deterministic() && !self.factory.reports_counters() {
            return Err(EstimateError::MetricUnavailable(self.options.metric));
        }
        let deadline = match (self.options.deadline, deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let opts = EstimateOptions {
            best_known,
            deadline,
            ..self.options.clone()
        };
        let t0 = Instant::now();
        let (estimate, pool) = self.run(set, &opts)?;
        self.stats.merge(&pool);
        self.history.push(PointEvaluation {
            set: set.clone(),
            estimate: estimate.clone(),
            wall_seconds: t0.elapsed().as_secs_f64(),
            pool,
        });
        Ok(estimate)
    }
}
