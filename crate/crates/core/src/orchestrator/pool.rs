use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cnf::CnfFormula;
use crate::decomposition::SamplePlan;
use crate::predictive::{limits_for, Accumulator, EstimateError, EstimateOptions, PredictiveEstimate, Verdict};
use crate::solver::{LimitReason, SolveError, SolveResult, SolveStatus, SolverFactory};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker: usize,
    pub solves: usize,
    pub busy_seconds: f64,
}

/// Bookkeeping for one pooled evaluation. Every dispatched observation is
/// either completed (its cost entered the sum) or abandoned.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub dispatched: usize,
    pub completed: usize,
    pub abandoned: usize,
    pub workers: Vec<WorkerStats>,
}

impl PoolStats {
    pub fn is_reconciled(&self) -> bool {
        self.dispatched == self.completed + self.abandoned
            && self.dispatched == self.workers.iter().map(|w| w.solves).sum::<usize>()
    }

    pub fn merge(&mut self, other: &PoolStats) {
        self.dispatched += other.dispatched;
        self.completed += other.completed;
        self.abandoned += other.abandoned;
        for w in &other.workers {
            match self.workers.iter_mut().find(|x| x.worker == w.worker) {
                Some(x) => {
                    x.solves += w.solves;
                    x.busy_seconds += w.busy_seconds;
                }
                None => self.workers.push(w.clone()),
            }
        }
        self.workers.sort_by_key(|w| w.worker);
    }
}

enum Message {
    Done {
        worker: usize,
        index: usize,
        result: Result<SolveResult, SolveError>,
        seconds: f64,
    },
    Crashed {
        worker: usize,
        reason: String,
    },
}

/// Estimates `F` with `workers` threads, each owning a private solver.
///
/// Observations are handed out by index. The coordinator folds results into
/// the running sum strictly in plan order, so the outcome (status, value and
/// interruption bound) is the same for every worker count when the metric is
/// a deterministic counter. Once the estimate is decided, in-flight solves
/// are cancelled and their results discarded.
pub fn evaluate_parallel(
    formula: &CnfFormula,
    plan: &SamplePlan,
    factory: &dyn SolverFactory,
    workers: usize,
    opts: &EstimateOptions,
) -> Result<(PredictiveEstimate, PoolStats), EstimateError> {
    assert!(workers >= 1, "at least one worker");
    plan.decomposition.check_range(formula.num_vars())?;
    let n = plan.size;
    let mut acc = Accumulator::new(plan.d(), n, opts);
    let stop = opts.cancel.clone().unwrap_or_default().child();
    let limits = {
        let mut l = limits_for(opts, acc.solve_cap());
        l.cancel = Some(stop.clone());
        l
    };
    let next_job = AtomicUsize::new(0);
    // no job at or beyond this index is worth starting
    let horizon = AtomicUsize::new(n);
    let mut stats = PoolStats {
        workers: (0..workers)
            .map(|w| WorkerStats {
                worker: w,
                ..WorkerStats::default()
            })
            .collect(),
        ..PoolStats::default()
    };

    let (tx, rx) = mpsc::channel::<Message>();
    let outcome: Result<Option<Verdict>, EstimateError> = thread::scope(|s| {
        for w in 0..workers {
            let tx = tx.clone();
            let (next_job, horizon, limits, stop) = (&next_job, &horizon, &limits, &stop);
            s.spawn(move || {
                let body = catch_unwind(AssertUnwindSafe(|| {
                    let mut solver = factory.create();
                    while !stop.is_cancelled() {
                        let j = next_job.fetch_add(1, Ordering::Relaxed);
                        if j >= horizon.load(Ordering::Acquire) {
                            break;
                        }
                        let t0 = Instant::now();
                        let result = solver.solve(formula, &plan.assignment(j), limits);
                        let seconds = t0.elapsed().as_secs_f64();
                        let msg = Message::Done {
                            worker: w,
                            index: j,
                            result,
                            seconds,
                        };
                        if tx.send(msg).is_err() {
                            break;
                        }
                    }
                }));
                if let Err(payload) = body {
                    let reason = payload
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| payload.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "worker panicked".into());
                    let _ = tx.send(Message::Crashed { worker: w, reason });
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, SolveResult> = BTreeMap::new();
        let mut next_in_order = 0;
        let mut decided: Option<Result<Verdict, EstimateError>> = None;
        for msg in rx {
            match msg {
                Message::Crashed { worker, reason } => {
                    stop.cancel();
                    if !matches!(decided, Some(Err(_))) {
                        decided = Some(Err(EstimateError::Worker(format!("worker {worker}: {reason}"))));
                    }
                }
                Message::Done {
                    worker,
                    index,
                    result,
                    seconds,
                } => {
                    stats.dispatched += 1;
                    stats.workers[worker].solves += 1;
                    stats.workers[worker].busy_seconds += seconds;
                    if decided.is_some() {
                        continue;
                    }
                    let result = match result {
                        Ok(r) => r,
                        Err(e) => {
                            stop.cancel();
                            decided = Some(Err(e.into()));
                            continue;
                        }
                    };
                    if result.status == SolveStatus::Limit(LimitReason::CostCap) {
                        // later indices cannot matter once this one decides
                        horizon.fetch_min(index + 1, Ordering::AcqRel);
                    }
                    pending.insert(index, result);
                    while let Some(r) = pending.remove(&next_in_order) {
                        match acc.observe(next_in_order, &r, opts) {
                            Ok(Verdict::Continue) => next_in_order += 1,
                            Ok(v) => {
                                decided = Some(Ok(v));
                                break;
                            }
                            Err(e) => {
                                decided = Some(Err(e));
                                break;
                            }
                        }
                    }
                    if decided.is_some() {
                        stop.cancel();
                    }
                }
            }
        }
        decided.transpose()
    });

    stats.completed = acc.completed();
    stats.abandoned = stats.dispatched - stats.completed;
    let estimate = match outcome? {
        Some(Verdict::Interrupt(bound)) => acc.interrupted(Some(plan.seed), opts, bound, false),
        Some(Verdict::Abandon) => acc.interrupted(Some(plan.seed), opts, acc.partial_value(), true),
        Some(Verdict::Continue) => unreachable!("continue never decides"),
        None if acc.completed() == n => acc.finish(Some(plan.seed), opts)?,
        // workers stopped on an external cancellation before finishing
        None => acc.interrupted(Some(plan.seed), opts, acc.partial_value(), true),
    };
    Ok((estimate, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{random_k_cnf, Assignment};
    use crate::decomposition::{draw_sample, DecompositionSet};
    use crate::predictive::{estimate, EstimateStatus};
    use crate::solver::{CdclConfig, CdclSolver, CostMetric, SolveLimits, Solver};

    fn setup() -> (CnfFormula, SamplePlan) {
        let f = random_k_cnf(40, 170, 3, 9);
        let set = DecompositionSet::new(vec![2, 5, 9, 11, 17, 23]).unwrap();
        let plan = draw_sample(&set, 40, 77).unwrap();
        (f, plan)
    }

    #[test]
    fn one_worker_equals_sequential() {
        let (f, plan) = setup();
        let opts = EstimateOptions::with_metric(CostMetric::Decisions);
        let seq = estimate(&f, &plan, &mut CdclSolver::default(), &opts).unwrap();
        let (par, stats) = evaluate_parallel(&f, &plan, &CdclConfig::default(), 1, &opts).unwrap();
        assert_eq!(seq, par);
        assert!(stats.is_reconciled());
        assert_eq!(stats.dispatched, 40);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let (f, plan) = setup();
        let base = EstimateOptions::with_metric(CostMetric::Propagations);
        let (full, _) = evaluate_parallel(&f, &plan, &CdclConfig::default(), 1, &base).unwrap();
        assert_eq!(full.status, EstimateStatus::Complete);
        for threshold in [full.value * 0.3, full.value * 0.9, full.value, full.value * 1.5] {
            let opts = EstimateOptions {
                best_known: Some(threshold),
                ..base.clone()
            };
            let (one, _) = evaluate_parallel(&f, &plan, &CdclConfig::default(), 1, &opts).unwrap();
            for w in [2, 3, 8] {
                let (many, stats) = evaluate_parallel(&f, &plan, &CdclConfig::default(), w, &opts).unwrap();
                assert_eq!(one, many, "workers={w} threshold={threshold}");
                assert!(stats.is_reconciled());
            }
            assert_eq!(one.is_complete(), full.value <= threshold);
            if !one.is_complete() {
                assert!(one.value > threshold && one.value <= full.value);
            }
        }
    }

    struct Exploding;
    impl Solver for Exploding {
        fn solve(&mut self, _: &CnfFormula, a: &Assignment, _: &SolveLimits) -> Result<SolveResult, SolveError> {
            if a.pairs()[0].1 {
                panic!("boom");
            }
            CdclSolver::default().solve(&random_k_cnf(5, 5, 2, 0), &Assignment::empty(), &SolveLimits::none())
        }
    }
    struct ExplodingFactory;
    impl SolverFactory for ExplodingFactory {
        fn create(&self) -> Box<dyn Solver + Send> {
            Box::new(Exploding)
        }
    }

    #[test]
    fn worker_crash_is_an_error() {
        let (f, plan) = setup();
        let err = evaluate_parallel(&f, &plan, &ExplodingFactory, 4, &EstimateOptions::default()).unwrap_err();
        assert!(
            matches!(err, EstimateError::Worker(ref m) if m.contains("boom")),
            "{err}"
        );
    }

    #[test]
    fn external_cancel_abandons() {
        let (f, plan) = setup();
        let token = crate::solver::CancelToken::new();
        token.cancel();
        let opts = EstimateOptions {
            cancel: Some(token),
            ..EstimateOptions::with_metric(CostMetric::Decisions)
        };
        let (e, stats) = evaluate_parallel(&f, &plan, &CdclConfig::default(), 3, &opts).unwrap();
        assert_eq!(e.status, EstimateStatus::Interrupted);
        assert!(e.abandoned);
        assert!(stats.is_reconciled());
    }
}
