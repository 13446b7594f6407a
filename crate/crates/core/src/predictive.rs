//! The predictive function `F = 2^d * mean(xi)`, its running form with early
//! interruption, and the statistics around it (sample variance, Student-t
//! confidence intervals, the exhaustive oracle).

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula};
use crate::decomposition::{family_assignments, DecompositionError, DecompositionSet, SamplePlan};
use crate::solver::{CancelToken, CostMetric, LimitReason, SolveError, SolveLimits, SolveResult, SolveStatus, Solver};

pub const DEFAULT_GAMMA: f64 = 0.999;
pub const DEFAULT_SAMPLE_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("observation {index} hit a solver limit ({reason:?}); rerun with limit censoring to count it at the cap")]
    SolverLimit { index: usize, reason: LimitReason },
    #[error("the solver does not report the {0} metric")]
    MetricUnavailable(CostMetric),
    #[error("sample variance needs at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidGamma(f64),
    #[error("worker failure: {0}")]
    Worker(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

/// `2^d * mean`, the predictive function for a known mean cost.
pub fn predictive_value(d: usize, mean: f64) -> f64 {
    (d as f64).exp2() * mean
}

/// Unbiased sample variance `1/(k-1) * sum (x - mean)^2`.
pub fn sample_variance(costs: &[f64]) -> Result<f64, EstimateError> {
    let k = costs.len();
    if k < 2 {
        return Err(EstimateError::TooFewObservations(k));
    }
    let mean = costs.iter().sum::<f64>() / k as f64;
    let ss: f64 = costs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok(ss / (k - 1) as f64)
}

/// Two-sided Student-t quantile `t_{gamma, dof}`, i.e. the
/// `(1 + gamma) / 2` quantile of the t distribution. Computed by `statrs`
/// (regularized incomplete beta inversion), accurate well beyond three
/// decimals.
pub fn student_t_quantile(gamma: f64, dof: usize) -> Result<f64, EstimateError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(EstimateError::InvalidGamma(gamma));
    }
    if dof == 0 {
        return Err(EstimateError::TooFewObservations(1));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    Ok(t.inverse_cdf((1.0 + gamma) / 2.0))
}

/// Half-width `t_{gamma, N-1} * s / sqrt(N)` of the confidence interval for
/// the mean cost.
pub fn confidence_halfwidth(s2: f64, n: usize, gamma: f64) -> Result<f64, EstimateError> {
    if n < 2 {
        return Err(EstimateError::TooFewObservations(n));
    }
    let t = student_t_quantile(gamma, n - 1)?;
    Ok(t * s2.max(0.0).sqrt() / (n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateStatus {
    Complete,
    Interrupted,
}

/// What to do when a solve stops on its own resource limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPolicy {
    /// Fail the whole estimate.
    #[default]
    Abort,
    /// Count the observation at the cost reached when the limit hit, and
    /// report how many observations were censored this way.
    CountAsCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEstimate {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Observations that finished before the estimate ended.
    pub completed: usize,
    pub seed: Option<u64>,
    pub metric: CostMetric,
    pub gamma: f64,
    pub status: EstimateStatus,
    /// `F` for complete estimates; a strict lower bound on `F` otherwise.
    #[serde(rename = "F_or_bound")]
    pub value: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub s2: Option<f64>,
    /// Confidence half-width for the mean cost (complete estimates only).
    #[serde(rename = "ci")]
    pub ci_half_width: Option<f64>,
    pub sat_count: usize,
    pub censored: usize,
    /// Set when the estimate was cut off by a global deadline or
    /// cancellation rather than by exceeding the best known value.
    #[serde(default)]
    pub abandoned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

impl PredictiveEstimate {
    pub fn is_complete(&self) -> bool {
        self.status == EstimateStatus::Complete
    }

    pub fn f_value(&self) -> Option<f64> {
        self.is_complete().then_some(self.value)
    }

    /// `F +- 2^d * half_width`: the interval for the total cost.
    pub fn f_interval(&self) -> Option<(f64, f64)> {
        let hw = self.ci_half_width? * (self.d as f64).exp2();
        self.f_value().map(|f| (f - hw, f + hw))
    }
}

#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub metric: CostMetric,
    pub gamma: f64,
    /// Interrupt as soon as the running predictive value exceeds this.
    pub best_known: Option<f64>,
    pub limit_policy: LimitPolicy,
    pub keep_costs: bool,
    pub max_conflicts: Option<u64>,
    pub deadline: Option<Instant>,
    pub cancel: Option<CancelToken>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            metric: CostMetric::default(),
            gamma: DEFAULT_GAMMA,
            best_known: None,
            limit_policy: LimitPolicy::Abort,
            keep_costs: false,
            max_conflicts: None,
            deadline: None,
            cancel: None,
        }
    }
}

impl EstimateOptions {
    pub fn with_metric(metric: CostMetric) -> EstimateOptions {
        EstimateOptions {
            metric,
            ..EstimateOptions::default()
        }
    }

    fn stopped_externally(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.is_cancelled()) || self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// What the caller should do after an observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Continue,
    /// The running value exceeded the threshold; this is the bound.
    Interrupt(f64),
    /// The observation was abandoned because of a deadline or cancellation.
    Abandon,
}

/// Serialized accumulation point for one estimate. Sums are always formed
/// in plan order on completion, so complete results do not depend on the
/// order in which observations arrive.
#[derive(Clone, Debug)]
pub struct Accumulator {
    d: usize,
    n: usize,
    scale: f64,
    threshold: Option<f64>,
    metric: CostMetric,
    policy: LimitPolicy,
    costs: Vec<Option<f64>>,
    running_sum: f64,
    completed: usize,
    sat_count: usize,
    censored: usize,
}

impl Accumulator {
    pub fn new(d: usize, n: usize, opts: &EstimateOptions) -> Accumulator {
        Accumulator {
            d,
            n,
            scale: (d as f64).exp2() / n as f64,
            threshold: opts.best_known,
            metric: opts.metric,
            policy: opts.limit_policy,
            costs: vec![None; n],
            running_sum: 0.0,
            completed: 0,
            sat_count: 0,
            censored: 0,
        }
    }

    /// `2^d / N`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    /// Running predictive value over completed observations.
    pub fn partial_value(&self) -> f64 {
        self.scale * self.running_sum
    }

    /// Largest cost a single in-flight solve may reach before the point is
    /// certainly above the threshold: any one observation above
    /// `threshold * N / 2^d` proves `F > threshold`. The cap does not depend
    /// on the running sum, so a solve's outcome depends only on its index.
    pub fn solve_cap(&self) -> Option<f64> {
        let t = self.threshold?;
        // slack so a threshold equal to the exact total does not trip the cap
        Some((t / self.scale).max(0.0) * (1.0 + 1e-9))
    }

    pub fn observe(
        &mut self,
        index: usize,
        result: &SolveResult,
        opts: &EstimateOptions,
    ) -> Result<Verdict, EstimateError> {
        assert!(self.costs[index].is_none(), "observation {index} recorded twice");
        let cost = match result.status {
            SolveStatus::Sat | SolveStatus::Unsat => result.cost.value(self.metric),
            SolveStatus::Limit(LimitReason::CostCap) => {
                let running = result
                    .cost
                    .value(self.metric)
                    .ok_or(EstimateError::MetricUnavailable(self.metric))?;
                return Ok(Verdict::Interrupt(self.scale * (self.running_sum + running)));
            }
            SolveStatus::Limit(_) if opts.stopped_externally() => return Ok(Verdict::Abandon),
            SolveStatus::Limit(LimitReason::Cancelled) => return Ok(Verdict::Abandon),
            SolveStatus::Limit(reason) => match self.policy {
                LimitPolicy::Abort => return Err(EstimateError::SolverLimit { index, reason }),
                LimitPolicy::CountAsCap => {
                    self.censored += 1;
                    result.cost.value(self.metric)
                }
            },
        };
        let cost = cost.ok_or(EstimateError::MetricUnavailable(self.metric))?;
        debug_assert!(cost >= 0.0);
        self.costs[index] = Some(cost);
        self.running_sum += cost;
        self.completed += 1;
        if result.status == SolveStatus::Sat {
            self.sat_count += 1;
        }
        match self.threshold {
            Some(t) if self.partial_value() > t => Ok(Verdict::Interrupt(self.partial_value())),
            _ => Ok(Verdict::Continue),
        }
    }

    fn completed_costs(&self) -> Vec<f64> {
        self.costs.iter().filter_map(|c| *c).collect()
    }

    pub fn finish(&self, seed: Option<u64>, opts: &EstimateOptions) -> Result<PredictiveEstimate, EstimateError> {
        assert_eq!(self.completed, self.n, "estimate finished with missing observations");
        let costs = self.completed_costs();
        let sum: f64 = costs.iter().sum();
        let mean = sum / self.n as f64;
        let (s2, ci) = if self.n >= 2 {
            let s2 = sample_variance(&costs)?;
            (Some(s2), Some(confidence_halfwidth(s2, self.n, opts.gamma)?))
        } else {
            (None, None)
        };
        Ok(self.build(
            seed,
            opts,
            EstimateStatus::Complete,
            self.scale * sum,
            mean,
            s2,
            ci,
            false,
            costs,
        ))
    }

    pub fn interrupted(
        &self,
        seed: Option<u64>,
        opts: &EstimateOptions,
        bound: f64,
        abandoned: bool,
    ) -> PredictiveEstimate {
        let costs = self.completed_costs();
        let k = costs.len();
        let mean = if k > 0 {
            costs.iter().sum::<f64>() / k as f64
        } else {
            0.0
        };
        let s2 = sample_variance(&costs).ok();
        self.build(
            seed,
            opts,
            EstimateStatus::Interrupted,
            bound,
            mean,
            s2,
            None,
            abandoned,
            costs,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        seed: Option<u64>,
        opts: &EstimateOptions,
        status: EstimateStatus,
        value: f64,
        mean: f64,
        s2: Option<f64>,
        ci: Option<f64>,
        abandoned: bool,
        costs: Vec<f64>,
    ) -> PredictiveEstimate {
        let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = costs.iter().copied().fold(0.0, f64::max);
        PredictiveEstimate {
            d: self.d,
            n: self.n,
            completed: self.completed,
            seed,
            metric: self.metric,
            gamma: opts.gamma,
            status,
            value,
            mean,
            min: if costs.is_empty() { 0.0 } else { min },
            max,
            s2,
            ci_half_width: ci,
            sat_count: self.sat_count,
            censored: self.censored,
            abandoned,
            costs: opts.keep_costs.then_some(costs),
        }
    }
}

pub(crate) fn limits_for(opts: &EstimateOptions, cap: Option<f64>) -> SolveLimits {
    SolveLimits {
        max_conflicts: opts.max_conflicts,
        cost_cap: cap.map(|c| (opts.metric, c)),
        deadline: opts.deadline,
        cancel: opts.cancel.clone(),
    }
}

/// Sequential estimate of `F` over a sample plan.
///
/// With `best_known`, the running sum `2^d/N * sum xi` is checked after every
/// observation and the estimate stops as `Interrupted` once it exceeds the
/// threshold. An in-flight solve is also stopped once its own cost alone
/// proves the threshold exceeded; deterministic counters of a stopped solve
/// never exceed those of the full solve, so the bound stays at most `F`.
pub fn estimate(
    formula: &CnfFormula,
    plan: &SamplePlan,
    solver: &mut dyn Solver,
    opts: &EstimateOptions,
) -> Result<PredictiveEstimate, EstimateError> {
    plan.decomposition.check_range(formula.num_vars())?;
    let mut acc = Accumulator::new(plan.d(), plan.size, opts);
    for j in 0..plan.size {
        if opts.stopped_externally() {
            let bound = acc.partial_value();
            return Ok(acc.interrupted(Some(plan.seed), opts, bound, true));
        }
        let limits = limits_for(opts, acc.solve_cap());
        let result = solver.solve(formula, &plan.assignment(j), &limits)?;
        match acc.observe(j, &result, opts)? {
            Verdict::Continue => {}
            Verdict::Interrupt(bound) => return Ok(acc.interrupted(Some(plan.seed), opts, bound, false)),
            Verdict::Abandon => {
                let bound = acc.partial_value();
                return Ok(acc.interrupted(Some(plan.seed), opts, bound, true));
            }
        }
    }
    acc.finish(Some(plan.seed), opts)
}

/// The `d = 0` case: solve the whole formula once; `F` is that cost.
pub fn estimate_whole(
    formula: &CnfFormula,
    solver: &mut dyn Solver,
    opts: &EstimateOptions,
) -> Result<PredictiveEstimate, EstimateError> {
    let mut acc = Accumulator::new(0, 1, opts);
    let limits = limits_for(opts, acc.solve_cap());
    let result = solver.solve(formula, &Assignment::empty(), &limits)?;
    match acc.observe(0, &result, opts)? {
        Verdict::Continue => acc.finish(None, opts),
        Verdict::Interrupt(bound) => Ok(acc.interrupted(None, opts, bound, false)),
        Verdict::Abandon => Ok(acc.interrupted(None, opts, 0.0, true)),
    }
}

/// `t_A(C, X)`: the total cost of solving every member of the decomposition
/// family. Members are solved through assumptions, like [`estimate`].
pub fn exhaustive_total(
    formula: &CnfFormula,
    set: &DecompositionSet,
    solver: &mut dyn Solver,
    metric: CostMetric,
    max_d: usize,
) -> Result<f64, EstimateError> {
    set.check_range(formula.num_vars())?;
    let mut total = 0.0;
    for (index, a) in family_assignments(set, max_d)?.enumerate() {
        let r = solver.solve(formula, &a, &SolveLimits::none())?;
        if let SolveStatus::Limit(reason) = r.status {
            return Err(EstimateError::SolverLimit { index, reason });
        }
        total += r.cost.value(metric).ok_or(EstimateError::MetricUnavailable(metric))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::random_k_cnf;
    use crate::decomposition::draw_sample;
    use crate::solver::{CdclSolver, SolveCost};

    fn fake(status: SolveStatus, cost: u64) -> SolveResult {
        SolveResult {
            status,
            model: None,
            cost: SolveCost {
                wall_seconds: 0.0,
                decisions: Some(cost),
                propagations: Some(cost),
                conflicts: Some(0),
            },
        }
    }

    #[test]
    fn predictive_value_table_rows() {
        let f = predictive_value(45, 0.61090);
        assert!((f / 2.14941e13 - 1.0).abs() < 1e-4, "{f}");
        let f = predictive_value(47, 0.00095);
        assert!((f / 1.33910e11 - 1.0).abs() < 5e-3, "{f}");
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sample_variance(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sample_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            sample_variance(&[1.0]),
            Err(EstimateError::TooFewObservations(1))
        ));
    }

    #[test]
    fn halfwidth_examples() {
        let t = student_t_quantile(0.999, 9999).unwrap();
        assert!((t - 3.29).abs() <= 0.01, "{t}");
        assert_eq!(confidence_halfwidth(0.0, 100, 0.999).unwrap(), 0.0);
        let hw = confidence_halfwidth(1.0, 30, 0.999).unwrap();
        assert!((hw - 3.659 / 30f64.sqrt()).abs() < 1e-3, "{hw}");
        assert!(matches!(
            confidence_halfwidth(1.0, 30, 1.0),
            Err(EstimateError::InvalidGamma(_))
        ));
        assert!(matches!(
            confidence_halfwidth(1.0, 30, 0.0),
            Err(EstimateError::InvalidGamma(_))
        ));
    }

    #[test]
    fn constant_sample() {
        let opts = EstimateOptions::with_metric(CostMetric::Decisions);
        let mut acc = Accumulator::new(2, 4, &opts);
        for j in 0..4 {
            assert_eq!(
                acc.observe(j, &fake(SolveStatus::Unsat, 1), &opts).unwrap(),
                Verdict::Continue
            );
        }
        let e = acc.finish(None, &opts).unwrap();
        assert_eq!(e.value, 4.0);
        assert_eq!(e.s2, Some(0.0));
        assert_eq!(e.ci_half_width, Some(0.0));
        assert_eq!(e.f_interval(), Some((4.0, 4.0)));
    }

    #[test]
    fn accumulator_interrupts_strictly_above_threshold() {
        let opts = EstimateOptions {
            best_known: Some(4.0),
            ..EstimateOptions::with_metric(CostMetric::Decisions)
        };
        // scale = 2^2 / 4 = 1
        let mut acc = Accumulator::new(2, 4, &opts);
        assert_eq!(
            acc.observe(0, &fake(SolveStatus::Sat, 2), &opts).unwrap(),
            Verdict::Continue
        );
        assert_eq!(
            acc.observe(1, &fake(SolveStatus::Sat, 2), &opts).unwrap(),
            Verdict::Continue
        );
        assert_eq!(
            acc.observe(2, &fake(SolveStatus::Sat, 1), &opts).unwrap(),
            Verdict::Interrupt(5.0)
        );
        let e = acc.interrupted(None, &opts, 5.0, false);
        assert_eq!(e.status, EstimateStatus::Interrupted);
        assert_eq!(e.completed, 3);
        assert_eq!(e.f_value(), None);
    }

    #[test]
    fn limit_policy() {
        let opts = EstimateOptions::with_metric(CostMetric::Decisions);
        let mut acc = Accumulator::new(1, 2, &opts);
        let err = acc
            .observe(0, &fake(SolveStatus::Limit(LimitReason::Conflicts), 7), &opts)
            .unwrap_err();
        assert!(matches!(err, EstimateError::SolverLimit { index: 0, .. }));

        let opts = EstimateOptions {
            limit_policy: LimitPolicy::CountAsCap,
            ..opts
        };
        let mut acc = Accumulator::new(1, 2, &opts);
        acc.observe(0, &fake(SolveStatus::Limit(LimitReason::Conflicts), 7), &opts)
            .unwrap();
        acc.observe(1, &fake(SolveStatus::Sat, 1), &opts).unwrap();
        let e = acc.finish(None, &opts).unwrap();
        assert_eq!(e.censored, 1);
        assert_eq!(e.value, 8.0);
    }

    #[test]
    fn estimate_matches_manual_sum() {
        let f = random_k_cnf(20, 80, 3, 1);
        let set = DecompositionSet::new(vec![1, 2, 3, 4]).unwrap();
        let plan = draw_sample(&set, 10, 3).unwrap();
        let opts = EstimateOptions {
            keep_costs: true,
            ..EstimateOptions::with_metric(CostMetric::Propagations)
        };
        let mut solver = CdclSolver::default();
        let e = estimate(&f, &plan, &mut solver, &opts).unwrap();
        let mut sum = 0.0;
        for j in 0..10 {
            let r = solver.solve(&f, &plan.assignment(j), &SolveLimits::none()).unwrap();
            sum += r.cost.propagations.unwrap() as f64;
        }
        assert_eq!(e.value, 16.0 / 10.0 * sum);
        assert_eq!(e.costs.as_ref().unwrap().len(), 10);
        assert_eq!(e.status, EstimateStatus::Complete);
    }

    #[test]
    fn exhaustive_degenerate_cases() {
        let f = random_k_cnf(12, 50, 3, 2);
        let mut solver = CdclSolver::default();
        let whole = solver.solve(&f, &Assignment::empty(), &SolveLimits::none()).unwrap();
        let t0 = exhaustive_total(
            &f,
            &DecompositionSet::empty(),
            &mut solver,
            CostMetric::Propagations,
            30,
        )
        .unwrap();
        assert_eq!(t0, whole.cost.propagations.unwrap() as f64);

        let set = DecompositionSet::new(vec![5]).unwrap();
        let t1 = exhaustive_total(&f, &set, &mut solver, CostMetric::Propagations, 30).unwrap();
        let mut expect = 0.0;
        for b in [false, true] {
            let a = Assignment::new(vec![(5, b)]).unwrap();
            expect += solver
                .solve(&f, &a, &SolveLimits::none())
                .unwrap()
                .cost
                .propagations
                .unwrap() as f64;
        }
        assert_eq!(t1, expect);
    }
}
