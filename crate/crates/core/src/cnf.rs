//! CNF formulas, truth-assignment substitution and DIMACS I/O.
//!
//! Variables are numbered `1..=num_vars` and never renumbered: substitution
//! keeps the original indices so that decomposition sets stay meaningful
//! across every member of a decomposition family.

use std::fmt;
use std::io::{self, Write};
use std::ops::Not;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 1-based variable index.
pub type Var = u32;

/// A literal in DIMACS convention: `+v` or `-v`, never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lit(i32);

impl Lit {
    #[inline]
    pub fn new(var: Var, positive: bool) -> Lit {
        debug_assert!(var >= 1 && var <= i32::MAX as u32);
        if positive {
            Lit(var as i32)
        } else {
            Lit(-(var as i32))
        }
    }

    #[inline]
    pub fn pos(var: Var) -> Lit {
        Lit::new(var, true)
    }

    #[inline]
    pub fn neg(var: Var) -> Lit {
        Lit::new(var, false)
    }

    /// Returns `None` for zero.
    #[inline]
    pub fn from_dimacs(value: i32) -> Option<Lit> {
        (value != 0 && value != i32::MIN).then_some(Lit(value))
    }

    #[inline]
    pub fn var(self) -> Var {
        self.0.unsigned_abs()
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    #[inline]
    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    /// The truth value of this literal when its variable takes `value`.
    #[inline]
    pub fn eval(self, value: bool) -> bool {
        value == self.is_positive()
    }
}

impl Not for Lit {
    type Output = Lit;
    #[inline]
    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CnfError {
    #[error("literal {lit} out of range for {num_vars} variables")]
    LiteralOutOfRange { lit: i32, num_vars: u32 },
    #[error("variable {var} out of range for {num_vars} variables")]
    VariableOutOfRange { var: Var, num_vars: u32 },
    #[error("variable {0} assigned more than once")]
    DuplicateVariable(Var),
}

/// A clause database over variables `1..=num_vars`.
///
/// Clauses never contain a literal together with its negation and never
/// repeat a literal. An empty clause marks the formula as trivially
/// unsatisfiable; a formula without clauses is trivially satisfiable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
}

impl CnfFormula {
    /// Builds a formula, deduplicating literals and dropping tautologies.
    pub fn new<I, C>(num_vars: u32, clauses: I) -> Result<CnfFormula, CnfError>
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = Lit>,
    {
        let mut out = Vec::new();
        for clause in clauses {
            let clause: Vec<Lit> = clause.into_iter().collect();
            for &lit in &clause {
                if lit.var() > num_vars {
                    return Err(CnfError::LiteralOutOfRange {
                        lit: lit.to_dimacs(),
                        num_vars,
                    });
                }
            }
            if let Some(c) = normalize_clause(clause) {
                out.push(c);
            }
        }
        Ok(CnfFormula { num_vars, clauses: out })
    }

    /// Convenience constructor from DIMACS-style integer clauses.
    pub fn from_dimacs_clauses(num_vars: u32, clauses: &[Vec<i32>]) -> Result<CnfFormula, CnfError> {
        let mut lits = Vec::with_capacity(clauses.len());
        for clause in clauses {
            let mut c = Vec::with_capacity(clause.len());
            for &v in clause {
                match Lit::from_dimacs(v) {
                    Some(l) => c.push(l),
                    None => return Err(CnfError::LiteralOutOfRange { lit: v, num_vars }),
                }
            }
            lits.push(c);
        }
        CnfFormula::new(num_vars, lits)
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    pub fn to_dimacs_clauses(&self) -> Vec<Vec<i32>> {
        self.clauses
            .iter()
            .map(|c| c.iter().map(|l| l.to_dimacs()).collect())
            .collect()
    }

    pub fn is_trivially_unsat(&self) -> bool {
        self.clauses.iter().any(|c| c.is_empty())
    }

    pub fn is_trivially_sat(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Evaluates the formula under a total assignment; `values[v - 1]` is
    /// the value of variable `v`.
    pub fn is_satisfied_by(&self, values: &[bool]) -> bool {
        assert!(values.len() >= self.num_vars as usize);
        self.clauses
            .iter()
            .all(|c| c.iter().any(|l| l.eval(values[l.var() as usize - 1])))
    }

    /// `C[X/(a_1..a_d)]`: removes satisfied clauses and deletes falsified
    /// literals. Variable numbering is kept.
    pub fn substitute(&self, assignment: &Assignment) -> Result<CnfFormula, CnfError> {
        assignment.check_range(self.num_vars)?;
        if assignment.is_empty() {
            return Ok(self.clone());
        }
        let mut values: Vec<Option<bool>> = vec![None; self.num_vars as usize + 1];
        for &(v, b) in assignment.pairs() {
            values[v as usize] = Some(b);
        }
        let mut clauses = Vec::with_capacity(self.clauses.len());
        'clauses: for clause in &self.clauses {
            let mut reduced = Vec::with_capacity(clause.len());
            for &lit in clause {
                match values[lit.var() as usize] {
                    Some(b) if lit.eval(b) => continue 'clauses,
                    Some(_) => {}
                    None => reduced.push(lit),
                }
            }
            clauses.push(reduced);
        }
        Ok(CnfFormula {
            num_vars: self.num_vars,
            clauses,
        })
    }

    /// Adds a clause, normalizing it like [`CnfFormula::new`].
    pub fn add_clause(&mut self, clause: Vec<Lit>) -> Result<(), CnfError> {
        for &lit in &clause {
            if lit.var() > self.num_vars {
                return Err(CnfError::LiteralOutOfRange {
                    lit: lit.to_dimacs(),
                    num_vars: self.num_vars,
                });
            }
        }
        if let Some(c) = normalize_clause(clause) {
            self.clauses.push(c);
        }
        Ok(())
    }

    /// Variables that occur in at least one clause, as a dense flag vector
    /// indexed by `var - 1`.
    pub fn occurring_vars(&self) -> Vec<bool> {
        let mut occ = vec![false; self.num_vars as usize];
        for c in &self.clauses {
            for l in c {
                occ[l.var() as usize - 1] = true;
            }
        }
        occ
    }

    pub fn write_dimacs<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        let mut line = String::new();
        for clause in &self.clauses {
            line.clear();
            for lit in clause {
                line.push_str(&lit.to_dimacs().to_string());
                line.push(' ');
            }
            line.push('0');
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_dimacs_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dimacs(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("DIMACS output is ASCII")
    }
}

/// Drops duplicate literals (first occurrence wins) and returns `None` for
/// tautologies.
fn normalize_clause(clause: Vec<Lit>) -> Option<Vec<Lit>> {
    let mut out: Vec<Lit> = Vec::with_capacity(clause.len());
    for lit in clause {
        if out.contains(&!lit) {
            return None;
        }
        if !out.contains(&lit) {
            out.push(lit);
        }
    }
    Some(out)
}

/// A partial truth assignment: distinct variables with Boolean values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pairs: Vec<(Var, bool)>,
}

impl Assignment {
    pub fn new(pairs: Vec<(Var, bool)>) -> Result<Assignment, CnfError> {
        let mut seen: Vec<Var> = pairs.iter().map(|p| p.0).collect();
        seen.sort_unstable();
        for w in seen.windows(2) {
            if w[0] == w[1] {
                return Err(CnfError::DuplicateVariable(w[0]));
            }
        }
        if let Some(&v) = seen.first() {
            if v == 0 {
                return Err(CnfError::VariableOutOfRange { var: 0, num_vars: 0 });
            }
        }
        Ok(Assignment { pairs })
    }

    pub fn empty() -> Assignment {
        Assignment::default()
    }

    /// Pairs the variables with the bit vector, in order.
    pub fn from_bits(vars: &[Var], bits: &[bool]) -> Result<Assignment, CnfError> {
        assert_eq!(vars.len(), bits.len(), "variable and bit counts differ");
        Assignment::new(vars.iter().copied().zip(bits.iter().copied()).collect())
    }

    pub fn pairs(&self) -> &[(Var, bool)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn value_of(&self, var: Var) -> Option<bool> {
        self.pairs.iter().find(|p| p.0 == var).map(|p| p.1)
    }

    pub fn literals(&self) -> impl Iterator<Item = Lit> + '_ {
        self.pairs.iter().map(|&(v, b)| Lit::new(v, b))
    }

    pub fn check_range(&self, num_vars: u32) -> Result<(), CnfError> {
        match self.pairs.iter().find(|p| p.0 == 0 || p.0 > num_vars) {
            Some(&(var, _)) => Err(CnfError::VariableOutOfRange { var, num_vars }),
            None => Ok(()),
        }
    }

    /// Union of two assignments over disjoint variables.
    pub fn union(&self, other: &Assignment) -> Result<Assignment, CnfError> {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        Assignment::new(pairs)
    }
}

#[derive(Debug, Error)]
pub enum DimacsError {
    #[error("empty input")]
    EmptyInput,
    #[error("line {line}: malformed header: {text}")]
    MalformedHeader { line: usize, text: String },
    #[error("line {line}: clause data before the `p cnf` header")]
    MissingHeader { line: usize },
    #[error("line {line}: duplicate `p` header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: invalid token `{token}`")]
    InvalidToken { line: usize, token: String },
    #[error("line {line}: literal {lit} out of range for {num_vars} variables")]
    LiteralOutOfRange { line: usize, lit: i64, num_vars: u32 },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DimacsWarning {
    /// The header announced a different number of clauses than were read.
    ClauseCountMismatch { declared: usize, found: usize },
    /// The last clause was not terminated by `0`.
    UnterminatedClause,
}

impl fmt::Display for DimacsWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimacsWarning::ClauseCountMismatch { declared, found } => {
                write!(f, "header declares {declared} clauses, found {found}")
            }
            DimacsWarning::UnterminatedClause => write!(f, "last clause is not terminated by 0"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParsedDimacs {
    pub formula: CnfFormula,
    pub warnings: Vec<DimacsWarning>,
}

/// Parses DIMACS CNF. Comment lines start with `c`; a line starting with `%`
/// ends the input (SATLIB convention).
pub fn parse_dimacs(input: &[u8]) -> Result<ParsedDimacs, DimacsError> {
    if input.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(DimacsError::EmptyInput);
    }
    let text = String::from_utf8_lossy(input);
    let mut header: Option<(u32, usize)> = None;
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut open = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(DimacsError::DuplicateHeader { line: line_no });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(DimacsError::MissingHeader { line: line_no });
        };
        for token in line.split_whitespace() {
            let value: i64 = token.parse().map_err(|_| DimacsError::InvalidToken {
                line: line_no,
                token: token.to_string(),
            })?;
            if value == 0 {
                clauses.push(std::mem::take(&mut current));
                open = false;
                continue;
            }
            if value.unsigned_abs() > num_vars as u64 {
                return Err(DimacsError::LiteralOutOfRange {
                    line: line_no,
                    lit: value,
                    num_vars,
                });
            }
            current.push(Lit(value as i32));
            open = true;
        }
    }

    let Some((num_vars, declared)) = header else {
        return Err(DimacsError::EmptyInput);
    };
    let mut warnings = Vec::new();
    if open {
        clauses.push(current);
        warnings.push(DimacsWarning::UnterminatedClause);
    }
    if clauses.len() != declared {
        warnings.push(DimacsWarning::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    let formula = CnfFormula::new(num_vars, clauses).expect("literals were range-checked");
    Ok(ParsedDimacs { formula, warnings })
}

fn parse_header(line: &str, line_no: usize) -> Result<(u32, usize), DimacsError> {
    let malformed = || DimacsError::MalformedHeader {
        line: line_no,
        text: line.to_string(),
    };
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
        return Err(malformed());
    }
    let n: u32 = parts[2].parse().map_err(|_| malformed())?;
    let m: usize = parts[3].parse().map_err(|_| malformed())?;
    if n == 0 || n > i32::MAX as u32 {
        return Err(malformed());
    }
    Ok((n, m))
}

/// Uniform random k-CNF: every clause draws `k` distinct variables and
/// independent signs from a ChaCha8 stream seeded with `seed`.
pub fn random_k_cnf(num_vars: u32, num_clauses: usize, k: usize, seed: u64) -> CnfFormula {
    assert!(k >= 1 && k <= num_vars as usize, "clause width must be in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clauses = Vec::with_capacity(num_clauses);
    for _ in 0..num_clauses {
        let mut clause: Vec<Lit> = Vec::with_capacity(k);
        while clause.len() < k {
            let v = rng.random_range(1..=num_vars);
            if clause.iter().any(|l| l.var() == v) {
                continue;
            }
            clause.push(Lit::new(v, rng.random_bool(0.5)));
        }
        clauses.push(clause);
    }
    CnfFormula::new(num_vars, clauses).expect("generated literals are in range")
}
