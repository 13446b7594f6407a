//! Minimization of the predictive function over the Boolean hypercube.
//!
//! Every evaluated point is kept in one of two lists. `L2` holds points with
//! at least one unevaluated neighbor, each paired with a neighborhood vector
//! marking which neighbors already carry an estimate; `L1` holds points whose
//! whole radius-`rho` neighborhood is evaluated. Each iteration scans the
//! unevaluated neighbors of the current point, moving on the first strict
//! improvement of the best known value `psi`. When the neighborhood brings no
//! improvement (or the improving point is already fully explored) the next
//! current point is drawn from `L2` among the points closest in Hamming
//! distance to the best point. The search stops when `L2` is empty or the
//! time limit expires. The predictive function is computed at most once per
//! point.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula};
use crate::decomposition::{chi_decode, chi_encode, ChiVector, DecompositionError, DecompositionSet};
use crate::predictive::{EstimateError, EstimateStatus, PredictiveEstimate};
use crate::solver::{propagate_only, PropagationOutcome, SolveError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("time limit must be positive")]
    ZeroTimeLimit,
    #[error("radius must be between 1 and the search dimension {dim}, got {rho}")]
    InvalidRadius { rho: usize, dim: usize },
    #[error("initial point could not be evaluated before the time limit")]
    InitialEstimateUnavailable,
    #[error("not a strong unit propagation backdoor: assignment {assignment:?} leaves the formula undecided")]
    NotSupbs { assignment: Vec<(u32, bool)> },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Computes the predictive function at one point of the search space.
pub trait PointEvaluator {
    /// `best_known` is the interruption threshold; `None` evaluates fully.
    fn evaluate(
        &mut self,
        set: &DecompositionSet,
        best_known: Option<f64>,
        deadline: Option<Instant>,
    ) -> Result<PredictiveEstimate, EstimateError>;
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// The positions of the hypercube that may be flipped, with the fixed
/// neighbor enumeration: radius 1 first, then radius 2, and so on; within a
/// radius, flipped-position tuples in lexicographic order.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    dim: usize,
    free: Vec<usize>,
    slot: Vec<Option<usize>>,
    rho: usize,
    offsets: Vec<usize>,
    size: usize,
}

impl SearchSpace {
    /// `free` lists 0-based positions; everything else stays at its value in
    /// the starting point.
    pub fn new(dim: usize, mut free: Vec<usize>, rho: usize) -> Result<SearchSpace, SearchError> {
        free.sort_unstable();
        free.dedup();
        assert!(free.last().is_none_or(|&p| p < dim));
        if rho == 0 || rho > free.len() {
            return Err(SearchError::InvalidRadius { rho, dim: free.len() });
        }
        let mut slot = vec![None; dim];
        for (i, &p) in free.iter().enumerate() {
            slot[p] = Some(i);
        }
        let m = free.len();
        let mut offsets = vec![0; rho + 1];
        for k in 1..=rho {
            offsets[k] = if k == 1 { 0 } else { offsets[k - 1] + binomial(m, k - 1) };
        }
        let size = (1..=rho).map(|k| binomial(m, k)).sum();
        Ok(SearchSpace {
            dim,
            free,
            slot,
            rho,
            offsets,
            size,
        })
    }

    pub fn full(dim: usize, rho: usize) -> Result<SearchSpace, SearchError> {
        SearchSpace::new(dim, (0..dim).collect(), rho)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn free_positions(&self) -> &[usize] {
        &self.free
    }

    /// Length of every neighborhood vector: `sum_{i=1..rho} C(m, i)`.
    pub fn neighborhood_size(&self) -> usize {
        self.size
    }

    /// Rank of a sorted tuple of free-slot indices in the neighbor order.
    fn rank(&self, slots: &[usize]) -> usize {
        let m = self.free.len();
        let k = slots.len();
        let mut rank = self.offsets[k];
        let mut prev: isize = -1;
        for (i, &c) in slots.iter().enumerate() {
            for j in (prev + 1) as usize..c {
                rank += binomial(m - 1 - j, k - 1 - i);
            }
            prev = c as isize;
        }
        rank
    }

    /// Neighbor index of `other` relative to `chi` (symmetric), or `None`
    /// when it is not in the punctured neighborhood.
    pub fn neighbor_index(&self, chi: &ChiVector, other: &ChiVector) -> Option<usize> {
        let dist = chi.hamming(other);
        if dist == 0 || dist > self.rho {
            return None;
        }
        let mut slots = Vec::with_capacity(dist);
        for p in 0..self.dim {
            if chi.get(p) != other.get(p) {
                slots.push(self.slot[p]?);
            }
        }
        Some(self.rank(&slots))
    }

    /// All points of the punctured neighborhood, in neighbor order.
    pub fn neighbors(&self, chi: &ChiVector) -> Vec<ChiVector> {
        let m = self.free.len();
        let mut out = Vec::with_capacity(self.size);
        for k in 1..=self.rho {
            let mut comb: Vec<usize> = (0..k).collect();
            loop {
                let mut nb = chi.clone();
                for &c in &comb {
                    nb.flip(self.free[c]);
                }
                out.push(nb);
                // next combination in lexicographic order
                let mut i = k;
                while i > 0 && comb[i - 1] == m - k + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                comb[i - 1] += 1;
                for j in i..k {
                    comb[j] = comb[j - 1] + 1;
                }
            }
        }
        out
    }

    /// The neighbor at `index` in neighbor order.
    pub fn neighbor_at(&self, chi: &ChiVector, index: usize) -> ChiVector {
        assert!(index < self.size);
        let m = self.free.len();
        let mut k = 1;
        while k < self.rho && index >= self.offsets[k + 1] {
            k += 1;
        }
        let mut rest = index - self.offsets[k];
        let mut nb = chi.clone();
        let mut next = 0;
        for i in 0..k {
            let mut c = next;
            loop {
                let block = binomial(m - 1 - c, k - 1 - i);
                if rest < block {
                    break;
                }
                rest -= block;
                c += 1;
            }
            nb.flip(self.free[c]);
            next = c + 1;
        }
        nb
    }
}

/// All points at Hamming distance `1..=rho` from `chi` over all `n`
/// positions, in neighbor order.
pub fn neighbors(chi: &ChiVector, rho: usize) -> Result<Vec<ChiVector>, SearchError> {
    Ok(SearchSpace::full(chi.len(), rho)?.neighbors(chi))
}

/// Which neighbors of a point already carry an estimate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodVector {
    bits: ChiVector,
    ones: usize,
}

impl NeighborhoodVector {
    fn new(len: usize) -> NeighborhoodVector {
        NeighborhoodVector {
            bits: ChiVector::zeros(len),
            ones: 0,
        }
    }

    fn mark(&mut self, k: usize) {
        if !self.bits.get(k) {
            self.bits.set(k, true);
            self.ones += 1;
        }
    }

    pub fn get(&self, k: usize) -> bool {
        self.bits.get(k)
    }

    pub fn is_full(&self) -> bool {
        self.ones == self.bits.len()
    }

    pub fn zeros(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&k| !self.bits.get(k)).collect()
    }
}

impl std::fmt::Display for NeighborhoodVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.bits.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub index: usize,
    pub iteration: usize,
    pub chi: ChiVector,
    pub d: usize,
    pub status: EstimateStatus,
    /// `F` or, for interrupted points, a lower bound on it.
    pub value: f64,
    pub completed_observations: usize,
    pub wall_seconds: f64,
    pub abandoned: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `L2` became empty.
    Exhausted,
    TimeLimit,
    EvaluationLimit,
}

/// Traversal counters in the shape of the classic search summary table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalCounters {
    pub completed: usize,
    pub interrupted: usize,
    pub l1: usize,
    pub l2: usize,
}

impl TraversalCounters {
    /// `completed + interrupted == |L1| + |L2|`.
    pub fn is_consistent(&self) -> bool {
        self.completed + self.interrupted == self.l1 + self.l2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best_chi: Option<ChiVector>,
    pub best_set: Option<DecompositionSet>,
    /// The best known value `psi` at termination.
    pub best_value: f64,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub counters: TraversalCounters,
    pub elapsed_seconds: f64,
    pub log: Vec<EvaluationRecord>,
}

impl SearchReport {
    /// The evaluation log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out =
            String::from("index,iteration,d,status,value,completed_observations,wall_seconds,abandoned,chi\n");
        for r in &self.log {
            let status = match r.status {
                EstimateStatus::Complete => "COMPLETE",
                EstimateStatus::Interrupted => "INTERRUPTED",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.index,
                r.iteration,
                r.d,
                status,
                r.value,
                r.completed_observations,
                r.wall_seconds,
                r.abandoned,
                r.chi
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub rho: usize,
    /// Seed for the tie-breaking generator of the point-choice heuristic.
    pub seed: u64,
    pub time_limit: Option<Duration>,
    /// Interruption threshold for points evaluated before any best value
    /// exists (in units of `F`).
    pub point_budget: Option<f64>,
    pub restrict_to_initial: bool,
    pub max_evaluations: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rho: 1,
            seed: 0,
            time_limit: None,
            point_budget: None,
            restrict_to_initial: false,
            max_evaluations: None,
        }
    }
}

/// Called after every evaluation; used for instrumentation.
pub trait SearchObserver {
    fn after_evaluation(&mut self, state: &TabuState, record: &EvaluationRecord);
}

impl SearchObserver for () {
    fn after_evaluation(&mut self, _: &TabuState, _: &EvaluationRecord) {}
}

/// The lists `L1`/`L2`, best value and current point of a running search.
#[derive(Clone, Debug)]
pub struct TabuState {
    space: SearchSpace,
    evaluated: HashMap<ChiVector, usize>,
    l1: HashSet<ChiVector>,
    l2: HashMap<ChiVector, NeighborhoodVector>,
    log: Vec<EvaluationRecord>,
    best_value: Option<f64>,
    best_point: Option<ChiVector>,
    origin: ChiVector,
    current: ChiVector,
    iteration: usize,
    rng: ChaCha8Rng,
}

impl TabuState {
    pub fn new(space: SearchSpace, start: ChiVector, seed: u64) -> TabuState {
        assert_eq!(space.dim(), start.len());
        TabuState {
            space,
            evaluated: HashMap::new(),
            l1: HashSet::new(),
            l2: HashMap::new(),
            log: Vec::new(),
            best_value: None,
            best_point: None,
            origin: start.clone(),
            current: start,
            iteration: 0,
            // decorrelated from the sampling streams, which are MT19937-64
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7ab0_5e1e_c7ed_u64),
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best_value
    }

    pub fn best_point(&self) -> Option<&ChiVector> {
        self.best_point.as_ref()
    }

    pub fn current(&self) -> &ChiVector {
        &self.current
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn log(&self) -> &[EvaluationRecord] {
        &self.log
    }

    pub fn is_evaluated(&self, chi: &ChiVector) -> bool {
        self.evaluated.contains_key(chi)
    }

    pub fn in_l1(&self, chi: &ChiVector) -> bool {
        self.l1.contains(chi)
    }

    pub fn l2_vector(&self, chi: &ChiVector) -> Option<&NeighborhoodVector> {
        self.l2.get(chi)
    }

    pub fn counters(&self) -> TraversalCounters {
        let completed = self.log.iter().filter(|r| r.status == EstimateStatus::Complete).count();
        TraversalCounters {
            completed,
            interrupted: self.log.len() - completed,
            l1: self.l1.len(),
            l2: self.l2.len(),
        }
    }

    /// Records an estimate for a new point and updates every affected
    /// neighborhood vector, migrating full points from `L2` to `L1`.
    fn record(&mut self, chi: ChiVector, estimate: &PredictiveEstimate, wall_seconds: f64) -> EvaluationRecord {
        assert!(!self.evaluated.contains_key(&chi), "point {chi} evaluated twice");
        let record = EvaluationRecord {
            index: self.log.len(),
            iteration: self.iteration,
            chi: chi.clone(),
            d: chi.count_ones(),
            status: estimate.status,
            value: estimate.value,
            completed_observations: estimate.completed,
            wall_seconds,
            abandoned: estimate.abandoned,
        };
        self.evaluated.insert(chi.clone(), record.index);
        self.log.push(record.clone());

        let mut theta = NeighborhoodVector::new(self.space.neighborhood_size());
        for (k, nb) in self.space.neighbors(&chi).into_iter().enumerate() {
            if !self.evaluated.contains_key(&nb) {
                continue;
            }
            theta.mark(k);
            // the neighbor index is symmetric in the two points
            if let Some(other) = self.l2.get_mut(&nb) {
                other.mark(k);
                if other.is_full() {
                    self.l2.remove(&nb);
                    self.l1.insert(nb);
                }
            }
        }
        if theta.is_full() {
            self.l1.insert(chi);
        } else {
            self.l2.insert(chi, theta);
        }
        record
    }

    /// A point of `L2` at minimal Hamming distance from the best point
    /// (or from the starting point while no complete value exists); ties
    /// are broken uniformly by the search's own generator.
    fn choose_from_l2(&mut self) -> Option<ChiVector> {
        let anchor = self.best_point.as_ref().unwrap_or(&self.origin);
        let mut best = usize::MAX;
        let mut candidates: Vec<&ChiVector> = Vec::new();
        for chi in self.l2.keys() {
            let d = chi.hamming(anchor);
            if d < best {
                best = d;
                candidates.clear();
            }
            if d == best {
                candidates.push(chi);
            }
        }
        if candidates.is_empty() {
            return None;
        }
        candidates.sort();
        let pick = self.rng.random_range(0..candidates.len());
        Some(candidates[pick].clone())
    }

    /// Checks the list invariants from scratch.
    pub fn verify_invariants(&self) -> Result<(), String> {
        for chi in self.l1.iter() {
            if self.l2.contains_key(chi) {
                return Err(format!("{chi} is in both L1 and L2"));
            }
        }
        if self.evaluated.len() != self.l1.len() + self.l2.len() {
            return Err(format!(
                "{} evaluated points but |L1| + |L2| = {}",
                self.evaluated.len(),
                self.l1.len() + self.l2.len()
            ));
        }
        for chi in self.evaluated.keys() {
            let in1 = self.l1.contains(chi);
            let in2 = self.l2.contains_key(chi);
            if in1 == in2 {
                return Err(format!("{chi} is in {} lists", usize::from(in1) + usize::from(in2)));
            }
            let nbs = self.space.neighbors(chi);
            let expected: Vec<bool> = nbs.iter().map(|nb| self.evaluated.contains_key(nb)).collect();
            if in1 && !expected.iter().all(|&b| b) {
                return Err(format!("{chi} is in L1 with an unevaluated neighbor"));
            }
            if let Some(theta) = self.l2.get(chi) {
                for (k, &e) in expected.iter().enumerate() {
                    if theta.get(k) != e {
                        return Err(format!("theta({chi})[{k}] = {} but evaluated = {e}", theta.get(k)));
                    }
                }
                if theta.is_full() {
                    return Err(format!("{chi} has a full neighborhood vector but is in L2"));
                }
            }
        }
        let min_complete = self
            .log
            .iter()
            .filter(|r| r.status == EstimateStatus::Complete)
            .map(|r| r.value)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
        if let (Some(m), Some(psi), Some(_)) = (min_complete, self.best_value, &self.best_point) {
            if m != psi {
                return Err(format!("psi = {psi} but the minimal complete value is {m}"));
            }
        }
        if let Some(bp) = &self.best_point {
            let idx = self.evaluated[bp];
            if self.log[idx].status != EstimateStatus::Complete {
                return Err(format!("best point {bp} has an interrupted estimate"));
            }
        }
        Ok(())
    }
}

/// Runs the tabu search from `initial`.
pub fn run_search(
    formula: &CnfFormula,
    initial: &DecompositionSet,
    config: &SearchConfig,
    evaluator: &mut dyn PointEvaluator,
    observer: &mut dyn SearchObserver,
) -> Result<SearchReport, SearchError> {
    if config.time_limit == Some(Duration::ZERO) {
        return Err(SearchError::ZeroTimeLimit);
    }
    let n = formula.num_vars();
    let start_chi = chi_encode(initial, n)?;
    let free: Vec<usize> = if config.restrict_to_initial {
        initial.vars().iter().map(|&v| v as usize - 1).collect()
    } else {
        (0..n as usize).collect()
    };
    let space = SearchSpace::new(n as usize, free, config.rho)?;
    let started = Instant::now();
    let deadline = config.time_limit.map(|t| started + t);
    let mut state = TabuState::new(space, start_chi.clone(), config.seed);

    let t0 = Instant::now();
    let first = evaluator.evaluate(initial, config.point_budget, deadline)?;
    if first.abandoned {
        return Err(SearchError::InitialEstimateUnavailable);
    }
    let rec = state.record(start_chi.clone(), &first, t0.elapsed().as_secs_f64());
    state.best_value = Some(first.value);
    if first.is_complete() {
        state.best_point = Some(start_chi.clone());
    }
    observer.after_evaluation(&state, &rec);

    let timed_out = |deadline: Option<Instant>| deadline.is_some_and(|d| Instant::now() >= d);
    let stop_reason = 'search: loop {
        if state.l2.is_empty() {
            break StopReason::Exhausted;
        }
        if timed_out(deadline) {
            break StopReason::TimeLimit;
        }
        if config.max_evaluations.is_some_and(|m| state.log.len() >= m) {
            break StopReason::EvaluationLimit;
        }
        if !state.l2.contains_key(&state.current) {
            match state.choose_from_l2() {
                Some(c) => state.current = c,
                None => break StopReason::Exhausted,
            }
        }
        let current = state.current.clone();
        let unexplored = state.l2[&current].zeros();
        let mut moved = false;
        for k in unexplored {
            if timed_out(deadline) {
                break 'search StopReason::TimeLimit;
            }
            if config.max_evaluations.is_some_and(|m| state.log.len() >= m) {
                break 'search StopReason::EvaluationLimit;
            }
            let candidate = state.space.neighbor_at(&current, k);
            if state.is_evaluated(&candidate) {
                continue;
            }
            let set = chi_decode(&candidate);
            let t0 = Instant::now();
            let est = evaluator.evaluate(&set, state.best_value, deadline)?;
            let rec = state.record(candidate.clone(), &est, t0.elapsed().as_secs_f64());
            let improved = est
                .f_value()
                .is_some_and(|f| state.best_value.is_none_or(|psi| f < psi));
            if improved {
                state.best_value = est.f_value();
                state.best_point = Some(candidate.clone());
            }
            observer.after_evaluation(&state, &rec);
            if est.abandoned {
                break 'search StopReason::TimeLimit;
            }
            if improved {
                if state.l2.contains_key(&candidate) {
                    state.current = candidate;
                } else if let Some(c) = state.choose_from_l2() {
                    state.current = c;
                }
                moved = true;
                break;
            }
        }
        if !moved {
            if let Some(c) = state.choose_from_l2() {
                state.current = c;
            }
        }
        state.iteration += 1;
    };

    Ok(SearchReport {
        best_set: state.best_point.as_ref().map(chi_decode),
        best_chi: state.best_point.clone(),
        best_value: state.best_value.unwrap_or(f64::INFINITY),
        stop_reason,
        iterations: state.iteration,
        counters: state.counters(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        log: state.log,
    })
}

/// Outcome of checking a candidate strong unit propagation backdoor set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupbsCheck {
    pub trials: usize,
    pub satisfied: usize,
    pub conflicts: usize,
}

/// Checks on `trials` random full assignments of `vars` that unit
/// propagation alone decides the substituted formula.
pub fn verify_supbs(
    formula: &CnfFormula,
    vars: &DecompositionSet,
    trials: usize,
    seed: u64,
) -> Result<SupbsCheck, SearchError> {
    vars.check_range(formula.num_vars())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = SupbsCheck {
        trials,
        satisfied: 0,
        conflicts: 0,
    };
    for _ in 0..trials {
        let bits: Vec<bool> = (0..vars.len()).map(|_| rng.random_bool(0.5)).collect();
        let a: Assignment = vars.assignment(&bits);
        match propagate_only(formula, &a)?.outcome {
            PropagationOutcome::Satisfied => check.satisfied += 1,
            PropagationOutcome::Conflict => check.conflicts += 1,
            PropagationOutcome::Undetermined => {
                return Err(SearchError::NotSupbs {
                    assignment: a.pairs().to_vec(),
                })
            }
        }
    }
    Ok(check)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupbsStart {
    pub initial: DecompositionSet,
    pub chi0: ChiVector,
    /// Copy into [`SearchConfig::restrict_to_initial`].
    pub restrict: bool,
    pub check: SupbsCheck,
}

/// Verifies `supbs` and turns it into the starting point of a search,
/// optionally restricting the search to its subsets.
pub fn init_from_supbs(
    formula: &CnfFormula,
    supbs: &DecompositionSet,
    restrict: bool,
    trials: usize,
    seed: u64,
) -> Result<SupbsStart, SearchError> {
    let check = verify_supbs(formula, supbs, trials, seed)?;
    Ok(SupbsStart {
        initial: supbs.clone(),
        chi0: chi_encode(supbs, formula.num_vars())?,
        restrict,
        check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictive::EstimateStatus;
    use crate::solver::CostMetric;

    fn chi(s: &str) -> ChiVector {
        ChiVector::from_bits(&s.chars().map(|c| c == '1').collect::<Vec<_>>())
    }

    #[test]
    fn neighbors_examples() {
        let n: Vec<String> = neighbors(&chi("000"), 1)
            .unwrap()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(n, vec!["100", "010", "001"]);
        let n: Vec<String> = neighbors(&chi("000"), 2)
            .unwrap()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(n, vec!["100", "010", "001", "110", "101", "011"]);
        assert!(neighbors(&chi("000"), 0).is_err());
        assert!(neighbors(&chi("000"), 4).is_err());
    }

    #[test]
    fn neighbor_count_law() {
        for n in 1..=9usize {
            for rho in 1..=n.min(4) {
                let c = ChiVector::from_bits(&(0..n).map(|i| i % 3 == 0).collect::<Vec<_>>());
                let nbs = neighbors(&c, rho).unwrap();
                let expected: usize = (1..=rho).map(|i| binomial(n, i)).sum();
                assert_eq!(nbs.len(), expected);
                let unique: HashSet<_> = nbs.iter().collect();
                assert_eq!(unique.len(), expected);
                assert!(nbs.iter().all(|x| (1..=rho).contains(&x.hamming(&c))));
            }
        }
    }

    #[test]
    fn neighbor_index_round_trips() {
        let space = SearchSpace::new(7, vec![0, 2, 3, 5, 6], 3).unwrap();
        let c = chi("1010011");
        for (k, nb) in space.neighbors(&c).iter().enumerate() {
            assert_eq!(space.neighbor_index(&c, nb), Some(k));
            assert_eq!(space.neighbor_index(nb, &c), Some(k));
            assert_eq!(&space.neighbor_at(&c, k), nb);
        }
        // position 1 is frozen
        assert_eq!(space.neighbor_index(&c, &chi("1110011")), None);
    }

    /// A synthetic objective: evaluation never interrupts below the
    /// threshold and reports a bound just above it otherwise.
    struct Synthetic<F: Fn(&DecompositionSet) -> f64> {
        f: F,
        calls: Vec<DecompositionSet>,
    }

    impl<F: Fn(&DecompositionSet) -> f64> PointEvaluator for Synthetic<F> {
        fn evaluate(
            &mut self,
            set: &DecompositionSet,
            best_known: Option<f64>,
            _: Option<Instant>,
        ) -> Result<PredictiveEstimate, EstimateError> {
            self.calls.push(set.clone());
            let v = (self.f)(set);
            let (status, value) = match best_known {
                Some(t) if v > t => (EstimateStatus::Interrupted, (t + v) / 2.0),
                _ => (EstimateStatus::Complete, v),
            };
            Ok(PredictiveEstimate {
                d: set.len(),
                n: 1,
                completed: 1,
                seed: None,
                metric: CostMetric::Decisions,
                gamma: 0.999,
                status,
                value,
                mean: v,
                min: v,
                max: v,
                s2: None,
                ci_half_width: None,
                sat_count: 0,
                censored: 0,
                abandoned: false,
                costs: None,
            })
        }
    }

    struct Checker;
    impl SearchObserver for Checker {
        fn after_evaluation(&mut self, state: &TabuState, _: &EvaluationRecord) {
            state.verify_invariants().unwrap();
        }
    }

    #[test]
    fn exhausts_small_hypercube_and_finds_minimum() {
        let formula = CnfFormula::from_dimacs_clauses(5, &[vec![1, 2, 3, 4, 5]]).unwrap();
        let objective = |s: &DecompositionSet| {
            let v: u32 = s.vars().iter().map(|&x| x * x).sum();
            ((v as f64) - 20.0).abs() + 1.0
        };
        let mut eval = Synthetic {
            f: objective,
            calls: Vec::new(),
        };
        let report = run_search(
            &formula,
            &DecompositionSet::full(5),
            &SearchConfig::default(),
            &mut eval,
            &mut Checker,
        )
        .unwrap();
        assert_eq!(report.stop_reason, StopReason::Exhausted);
        assert_eq!(report.log.len(), 32);
        let unique: HashSet<_> = eval.calls.iter().collect();
        assert_eq!(unique.len(), 32);
        let brute = (0u32..32)
            .map(|m| {
                let vars = (0..5).filter(|i| m >> i & 1 == 1).map(|i| i + 1).collect();
                objective(&DecompositionSet::new(vars).unwrap())
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_value, brute);
        assert!(report.counters.is_consistent());
        assert_eq!(report.counters.l1, 32);
        // {2,4}: 4 + 16 = 20
        assert_eq!(report.best_set.unwrap().vars(), &[2, 4]);
    }

    #[test]
    fn restricted_search_freezes_outside_positions() {
        let formula = CnfFormula::from_dimacs_clauses(6, &[vec![1]]).unwrap();
        let initial = DecompositionSet::new(vec![2, 4, 5]).unwrap();
        let mut eval = Synthetic {
            f: |s: &DecompositionSet| s.len() as f64 + 1.0,
            calls: Vec::new(),
        };
        let config = SearchConfig {
            restrict_to_initial: true,
            ..SearchConfig::default()
        };
        let report = run_search(&formula, &initial, &config, &mut eval, &mut Checker).unwrap();
        assert_eq!(report.log.len(), 8);
        assert!(eval.calls.iter().all(|s| s.vars().iter().all(|v| initial.contains(*v))));
        assert_eq!(report.best_value, 1.0);
        assert_eq!(report.best_set.unwrap(), DecompositionSet::empty());
    }

    #[test]
    fn zero_time_limit_is_rejected() {
        let formula = CnfFormula::from_dimacs_clauses(2, &[vec![1]]).unwrap();
        let mut eval = Synthetic {
            f: |_: &DecompositionSet| 1.0,
            calls: Vec::new(),
        };
        let config = SearchConfig {
            time_limit: Some(Duration::ZERO),
            ..SearchConfig::default()
        };
        assert!(matches!(
            run_search(&formula, &DecompositionSet::full(2), &config, &mut eval, &mut ()),
            Err(SearchError::ZeroTimeLimit)
        ));
    }

    #[test]
    fn psi_is_monotone_and_best_is_complete() {
        let formula = CnfFormula::from_dimacs_clauses(8, &[vec![1]]).unwrap();
        let mut eval = Synthetic {
            f: |s: &DecompositionSet| {
                let h: u64 = s.vars().iter().map(|&v| u64::from(v) * 2654435761 % 97).sum();
                (h % 50) as f64 + 1.0
            },
            calls: Vec::new(),
        };
        let report = run_search(
            &formula,
            &DecompositionSet::full(8),
            &SearchConfig {
                seed: 3,
                ..SearchConfig::default()
            },
            &mut eval,
            &mut Checker,
        )
        .unwrap();
        let mut psi = f64::INFINITY;
        for r in &report.log {
            if r.status == EstimateStatus::Complete {
                assert!(r.value <= psi, "complete value above psi was not interrupted");
                psi = r.value;
            } else {
                assert!(r.value > psi);
            }
        }
        assert_eq!(psi, report.best_value);
        assert_eq!(report.log.len(), 256);
    }

    #[test]
    fn supbs_full_set_always_verifies() {
        let f = crate::cnf::random_k_cnf(15, 60, 3, 4);
        let check = verify_supbs(&f, &DecompositionSet::full(15), 50, 1).unwrap();
        assert_eq!(check.satisfied + check.conflicts, 50);
        let err = verify_supbs(&f, &DecompositionSet::new(vec![1]).unwrap(), 10, 1);
        assert!(matches!(err, Err(SearchError::NotSupbs { .. })));
    }
}
