use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    CostMetric, LimitReason, SolveCost, SolveError, SolveLimits, SolveResult, SolveStatus, Solver, SolverFactory,
};
use crate::cnf::{Assignment, CnfFormula, Lit};

// Internal literal code: 2 * (var - 1) + (negative as u32).
type Code = u32;

const NO_REASON: u32 = u32::MAX;

const UNDEF: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

#[inline]
fn encode(lit: Lit) -> Code {
    ((lit.var() - 1) << 1) | (!lit.is_positive() as u32)
}

#[inline]
fn code_var(code: Code) -> usize {
    (code >> 1) as usize
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdclConfig {
    /// Hard cap on conflicts per solve; reaching it yields `Limit`.
    pub max_conflicts: Option<u64>,
}

impl SolverFactory for CdclConfig {
    fn create(&self) -> Box<dyn Solver + Send> {
        Box::new(CdclSolver::new(*self))
    }
}

/// Conflict-driven clause learning with two watched literals and first-UIP
/// learning. Branching order is fixed: lowest unassigned variable that
/// occurs in the formula, positive polarity first. No restarts.
///
/// Assumptions become the first decision levels (one level each, in the
/// order given) and are not counted as decisions.
#[derive(Clone, Debug, Default)]
pub struct CdclSolver {
    config: CdclConfig,
}

impl CdclSolver {
    pub fn new(config: CdclConfig) -> CdclSolver {
        CdclSolver { config }
    }
}

impl Solver for CdclSolver {
    fn solve(
        &mut self,
        formula: &CnfFormula,
        assumptions: &Assignment,
        limits: &SolveLimits,
    ) -> Result<SolveResult, SolveError> {
        assumptions.check_range(formula.num_vars())?;
        let start = Instant::now();
        let mut search = Search::new(formula);
        let assumed: Vec<Code> = assumptions.literals().map(encode).collect();
        let max_conflicts = match (self.config.max_conflicts, limits.max_conflicts) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let status = search.run(&assumed, limits, max_conflicts, start);
        let model = (status == SolveStatus::Sat).then(|| search.model());
        let cost = SolveCost {
            wall_seconds: start.elapsed().as_secs_f64(),
            decisions: Some(search.decisions),
            propagations: Some(search.propagations),
            conflicts: Some(search.conflicts),
        };
        debug_assert!(model.as_ref().is_none_or(|m| formula.is_satisfied_by(m)));
        Ok(SolveResult { status, model, cost })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationOutcome {
    /// Propagation reached a conflicting clause.
    Conflict,
    /// No conflict and every clause has a true literal.
    Satisfied,
    /// Unit propagation alone cannot decide the formula.
    Undetermined,
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub outcome: PropagationOutcome,
    /// `values[v - 1]`; meaningful unless the outcome is `Conflict`.
    pub values: Vec<Option<bool>>,
}

/// Runs unit propagation only, with the assumptions as level-zero facts.
pub fn propagate_only(formula: &CnfFormula, assumptions: &Assignment) -> Result<PropagationResult, SolveError> {
    assumptions.check_range(formula.num_vars())?;
    let mut search = Search::new(formula);
    let mut conflict = search.unsat;
    if !conflict {
        for lit in assumptions.literals() {
            let code = encode(lit);
            match search.lit_value(code) {
                TRUE => {}
                FALSE => {
                    conflict = true;
                    break;
                }
                _ => search.enqueue(code, NO_REASON),
            }
        }
    }
    if !conflict {
        conflict = search.propagate().is_some();
    }
    let values: Vec<Option<bool>> = search
        .assigns
        .iter()
        .map(|&a| match a {
            TRUE => Some(true),
            FALSE => Some(false),
            _ => None,
        })
        .collect();
    let outcome = if conflict {
        PropagationOutcome::Conflict
    } else {
        let satisfied = formula
            .clauses()
            .iter()
            .all(|c| c.iter().any(|l| values[l.var() as usize - 1] == Some(l.is_positive())));
        if satisfied {
            PropagationOutcome::Satisfied
        } else {
            PropagationOutcome::Undetermined
        }
    };
    Ok(PropagationResult { outcome, values })
}

#[derive(Clone, Copy)]
struct Watch {
    cref: u32,
    blocker: Code,
}

// Clause literals live in one arena; `start..start + len`.
struct Clause {
    start: u32,
    len: u32,
    learnt: bool,
    deleted: bool,
}

struct Search {
    num_vars: usize,
    arena: Vec<Code>,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watch>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Code>,
    trail_lim: Vec<usize>,
    qhead: usize,
    seen: Vec<bool>,
    branchable: Vec<bool>,
    cursor: usize,
    num_learnts: usize,
    max_learnts: usize,
    unsat: bool,
    decisions: u64,
    propagations: u64,
    conflicts: u64,
}

impl Search {
    fn new(formula: &CnfFormula) -> Search {
        let n = formula.num_vars() as usize;
        let mut s = Search {
            num_vars: n,
            arena: Vec::with_capacity(formula.clauses().iter().map(Vec::len).sum::<usize>() * 2),
            clauses: Vec::with_capacity(formula.num_clauses() * 2),
            watches: Vec::new(),
            assigns: vec![UNDEF; n],
            level: vec![0; n],
            reason: vec![NO_REASON; n],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            seen: vec![false; n],
            branchable: formula.occurring_vars(),
            cursor: 0,
            num_learnts: 0,
            max_learnts: (formula.num_clauses() / 3).max(2000),
            unsat: false,
            decisions: 0,
            propagations: 0,
            conflicts: 0,
        };
        let mut degree = vec![0usize; 2 * n];
        for clause in formula.clauses().iter().filter(|c| c.len() >= 2) {
            degree[encode(clause[0]) as usize] += 1;
            degree[encode(clause[1]) as usize] += 1;
        }
        s.watches = degree.into_iter().map(|d| Vec::with_capacity(d + 4)).collect();
        let mut lits: Vec<Code> = Vec::new();
        for clause in formula.clauses() {
            lits.clear();
            lits.extend(clause.iter().map(|&l| encode(l)));
            match lits.len() {
                0 => s.unsat = true,
                1 => match s.lit_value(lits[0]) {
                    FALSE => s.unsat = true,
                    UNDEF => s.enqueue(lits[0], NO_REASON),
                    _ => {}
                },
                _ => {
                    s.attach(&lits, false);
                }
            }
        }
        s
    }

    #[inline]
    fn lit_value(&self, code: Code) -> i8 {
        let a = self.assigns[code_var(code)];
        if code & 1 == 1 {
            -a
        } else {
            a
        }
    }

    #[inline]
    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    #[inline]
    fn lits(&self, cref: u32) -> &[Code] {
        let c = &self.clauses[cref as usize];
        &self.arena[c.start as usize..(c.start + c.len) as usize]
    }

    fn attach(&mut self, lits: &[Code], learnt: bool) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0] as usize].push(Watch { cref, blocker: lits[1] });
        self.watches[lits[1] as usize].push(Watch { cref, blocker: lits[0] });
        self.clauses.push(Clause {
            start: self.arena.len() as u32,
            len: lits.len() as u32,
            learnt,
            deleted: false,
        });
        self.arena.extend_from_slice(lits);
        if learnt {
            self.num_learnts += 1;
        }
        cref
    }

    #[inline]
    fn enqueue(&mut self, code: Code, reason: u32) {
        let v = code_var(code);
        debug_assert_eq!(self.assigns[v], UNDEF);
        self.assigns[v] = if code & 1 == 1 { FALSE } else { TRUE };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(code);
    }

    /// Returns the conflicting clause, if any.
    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.propagations += 1;
            let false_lit = p ^ 1;
            let mut ws = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut i = 0;
            let mut j = 0;
            'watches: while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.lit_value(w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let clause = &self.clauses[w.cref as usize];
                if clause.deleted {
                    continue;
                }
                let (start, end) = (clause.start as usize, (clause.start + clause.len) as usize);
                let lits = &mut self.arena[start..end];
                if lits[0] == false_lit {
                    lits.swap(0, 1);
                }
                let first = lits[0];
                let first_value = {
                    let a = self.assigns[code_var(first)];
                    if first & 1 == 1 {
                        -a
                    } else {
                        a
                    }
                };
                if first != w.blocker && first_value == TRUE {
                    ws[j] = Watch {
                        cref: w.cref,
                        blocker: first,
                    };
                    j += 1;
                    continue;
                }
                for k in 2..lits.len() {
                    let lk = lits[k];
                    let a = self.assigns[code_var(lk)];
                    let value = if lk & 1 == 1 { -a } else { a };
                    if value != FALSE {
                        lits.swap(1, k);
                        self.watches[lk as usize].push(Watch {
                            cref: w.cref,
                            blocker: first,
                        });
                        continue 'watches;
                    }
                }
                ws[j] = Watch {
                    cref: w.cref,
                    blocker: first,
                };
                j += 1;
                if first_value == FALSE {
                    conflict = Some(w.cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[false_lit as usize] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                break;
            }
        }
        conflict
    }

    /// First-UIP learning. Returns the learnt clause (asserting literal
    /// first, a literal of the backjump level second) and the backjump level.
    fn analyze(&mut self, mut confl: u32) -> (Vec<Code>, usize) {
        let current = self.decision_level() as u32;
        let mut learnt: Vec<Code> = vec![0];
        let mut path = 0usize;
        let mut index = self.trail.len();
        let mut p: Option<Code> = None;
        loop {
            let skip = usize::from(p.is_some());
            let c = &self.clauses[confl as usize];
            for &q in &self.arena[(c.start as usize + skip)..(c.start + c.len) as usize] {
                let v = code_var(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[code_var(self.trail[index])] {
                    break;
                }
            }
            let lit = self.trail[index];
            let v = code_var(lit);
            self.seen[v] = false;
            p = Some(lit);
            path -= 1;
            if path == 0 {
                break;
            }
            confl = self.reason[v];
            debug_assert_ne!(confl, NO_REASON);
        }
        learnt[0] = p.expect("conflict analysis visits at least one literal") ^ 1;
        // drop literals implied by the rest of the clause
        let redundant: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(k, &q)| {
                let r = self.reason[code_var(q)];
                k > 0
                    && r != NO_REASON
                    && self.lits(r)[1..]
                        .iter()
                        .all(|&x| self.seen[code_var(x)] || self.level[code_var(x)] == 0)
            })
            .collect();
        for &q in &learnt[1..] {
            self.seen[code_var(q)] = false;
        }
        let mut k = 0;
        learnt.retain(|_| {
            k += 1;
            !redundant[k - 1]
        });
        let mut backjump = 0usize;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for k in 2..learnt.len() {
                if self.level[code_var(learnt[k])] > self.level[code_var(learnt[max_i])] {
                    max_i = k;
                }
            }
            learnt.swap(1, max_i);
            backjump = self.level[code_var(learnt[1])] as usize;
        }
        (learnt, backjump)
    }

    fn cancel_until(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let stop = self.trail_lim[level];
        for k in (stop..self.trail.len()).rev() {
            let v = code_var(self.trail[k]);
            self.assigns[v] = UNDEF;
            self.reason[v] = NO_REASON;
            if v < self.cursor {
                self.cursor = v;
            }
        }
        self.trail.truncate(stop);
        self.trail_lim.truncate(level);
        self.qhead = stop;
    }

    fn is_locked(&self, cref: u32) -> bool {
        let first = self.lits(cref)[0];
        let v = code_var(first);
        self.reason[v] == cref && self.lit_value(first) == TRUE
    }

    /// Deletes the longer half of the unlocked learnt clauses. Ties keep the
    /// older clause.
    fn reduce_learnts(&mut self) {
        let mut candidates: Vec<(usize, u32)> = self
            .clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.learnt && !c.deleted && c.len > 2)
            .map(|(i, c)| (c.len as usize, i as u32))
            .filter(|&(_, i)| !self.is_locked(i))
            .collect();
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        let remove = candidates.len() / 2;
        for &(_, cref) in &candidates[..remove] {
            self.clauses[cref as usize].deleted = true;
            self.num_learnts -= 1;
        }
        self.max_learnts += self.max_learnts / 10;
    }

    fn pick_branch(&mut self) -> Option<Code> {
        while self.cursor < self.num_vars && (self.assigns[self.cursor] != UNDEF || !self.branchable[self.cursor]) {
            self.cursor += 1;
        }
        (self.cursor < self.num_vars).then_some((self.cursor as Code) << 1)
    }

    fn cost_exceeded(&self, limits: &SolveLimits, start: Instant) -> Option<LimitReason> {
        if let Some(token) = &limits.cancel {
            if token.is_cancelled() {
                return Some(LimitReason::Cancelled);
            }
        }
        if let Some((metric, cap)) = limits.cost_cap {
            let running = match metric {
                CostMetric::Decisions => self.decisions as f64,
                CostMetric::Propagations => self.propagations as f64,
                CostMetric::WallTime => start.elapsed().as_secs_f64(),
            };
            if running > cap {
                return Some(LimitReason::CostCap);
            }
        }
        if let Some(deadline) = limits.deadline {
            if Instant::now() >= deadline {
                return Some(LimitReason::Time);
            }
        }
        None
    }

    fn run(
        &mut self,
        assumptions: &[Code],
        limits: &SolveLimits,
        max_conflicts: Option<u64>,
        start: Instant,
    ) -> SolveStatus {
        if self.unsat {
            return SolveStatus::Unsat;
        }
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    return SolveStatus::Unsat;
                }
                let (learnt, backjump) = self.analyze(confl);
                self.cancel_until(backjump);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], NO_REASON);
                } else {
                    let asserting = learnt[0];
                    let cref = self.attach(&learnt, true);
                    self.enqueue(asserting, cref);
                }
                if max_conflicts.is_some_and(|m| self.conflicts >= m) {
                    return SolveStatus::Limit(LimitReason::Conflicts);
                }
                if let Some(reason) = self.cost_exceeded(limits, start) {
                    return SolveStatus::Limit(reason);
                }
                continue;
            }

            if let Some(reason) = self.cost_exceeded(limits, start) {
                return SolveStatus::Limit(reason);
            }
            if self.num_learnts >= self.max_learnts {
                self.reduce_learnts();
            }

            let level = self.decision_level();
            if level < assumptions.len() {
                let a = assumptions[level];
                match self.lit_value(a) {
                    TRUE => self.trail_lim.push(self.trail.len()),
                    FALSE => return SolveStatus::Unsat,
                    _ => {
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(a, NO_REASON);
                    }
                }
                continue;
            }

            match self.pick_branch() {
                None => return SolveStatus::Sat,
                Some(code) => {
                    self.decisions += 1;
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(code, NO_REASON);
                }
            }
        }
    }

    /// Variables left unassigned (those not occurring in any clause) take
    /// the positive polarity.
    fn model(&self) -> Vec<bool> {
        self.assigns.iter().map(|&a| a != FALSE).collect()
    }
}
