//! Decomposition sets, their hypercube encoding, random sample plans and
//! exhaustive enumeration of decomposition families.

use std::fmt;

use rand_mt::Mt64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cnf::{Assignment, CnfError, CnfFormula, Var};

/// Default cap on `d` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("variable {var} out of range 1..={num_vars}")]
    IndexOutOfRange { var: Var, num_vars: u32 },
    #[error("variable 0 is not a valid index")]
    ZeroIndex,
    #[error("sample plans need a non-empty decomposition set")]
    EmptySet,
    #[error("sample size must be positive")]
    ZeroSamples,
    #[error("2^{d} family members exceed the enumeration budget of 2^{max}")]
    OverBudget { d: usize, max: usize },
    #[error(transparent)]
    Cnf(#[from] CnfError),
}

/// A sorted set of distinct variable indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecompositionSet(Vec<Var>);

impl DecompositionSet {
    /// Sorts and deduplicates `vars`.
    pub fn new(mut vars: Vec<Var>) -> Result<DecompositionSet, DecompositionError> {
        vars.sort_unstable();
        vars.dedup();
        if vars.first() == Some(&0) {
            return Err(DecompositionError::ZeroIndex);
        }
        Ok(DecompositionSet(vars))
    }

    pub fn empty() -> DecompositionSet {
        DecompositionSet(Vec::new())
    }

    /// All variables `1..=n`.
    pub fn full(n: u32) -> DecompositionSet {
        DecompositionSet((1..=n).collect())
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// The cardinality `d`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, var: Var) -> bool {
        self.0.binary_search(&var).is_ok()
    }

    pub fn check_range(&self, num_vars: u32) -> Result<(), DecompositionError> {
        match self.0.last() {
            Some(&v) if v > num_vars => Err(DecompositionError::IndexOutOfRange { var: v, num_vars }),
            _ => Ok(()),
        }
    }

    /// Pairs the variables with `bits` in ascending variable order.
    pub fn assignment(&self, bits: &[bool]) -> Assignment {
        Assignment::from_bits(&self.0, bits).expect("decomposition variables are distinct")
    }
}

impl fmt::Display for DecompositionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// A point of the hypercube `{0,1}^n`: bit `i` (0-based) is set iff
/// variable `i + 1` belongs to the decomposition set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChiVector {
    len: usize,
    words: Vec<u64>,
}

impl ChiVector {
    pub fn zeros(len: usize) -> ChiVector {
        ChiVector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> ChiVector {
        let mut chi = ChiVector::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                chi.set(i, true);
            }
        }
        chi
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &ChiVector) -> usize {
        assert_eq!(self.len, other.len, "hypercube dimensions differ");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Positions of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

impl fmt::Debug for ChiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChiVector({self})")
    }
}

impl fmt::Display for ChiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for ChiVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ChiVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "invalid character `{other}` in chi vector"
                    )))
                }
            }
        }
        Ok(ChiVector::from_bits(&bits))
    }
}

pub fn chi_encode(set: &DecompositionSet, n: u32) -> Result<ChiVector, DecompositionError> {
    set.check_range(n)?;
    let mut chi = ChiVector::zeros(n as usize);
    for &v in set.vars() {
        chi.set(v as usize - 1, true);
    }
    Ok(chi)
}

pub fn chi_decode(chi: &ChiVector) -> DecompositionSet {
    DecompositionSet(chi.ones().map(|i| i as Var + 1).collect())
}

/// `N` assignments of a decomposition set drawn i.i.d. uniformly (with
/// replacement) from `{0,1}^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub decomposition: DecompositionSet,
    pub seed: u64,
    pub size: usize,
    /// `assignments[j][k]` is the value of the `k`-th variable (ascending)
    /// in the `j`-th sample.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<Vec<bool>>,
}

impl SamplePlan {
    pub fn d(&self) -> usize {
        self.decomposition.len()
    }

    pub fn assignment(&self, j: usize) -> Assignment {
        self.decomposition.assignment(&self.assignments[j])
    }

    /// JSON audit record; explicit assignments only when asked for.
    pub fn audit_json(&self, with_assignments: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "decomposition": self.decomposition,
            "seed": self.seed,
            "size": self.size,
        });
        if with_assignments {
            let rows: Vec<String> = self
                .assignments
                .iter()
                .map(|a| a.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect();
            v["assignments"] = serde_json::json!(rows);
        }
        v
    }
}

/// Draws a sample plan from MT19937-64 seeded with `init_genrand64(seed)`.
///
/// Sample `j` consumes `ceil(d / 64)` consecutive 64-bit outputs; the
/// value of the `k`-th variable (ascending index) is bit `k % 64` (least
/// significant first) of output `k / 64`.
pub fn draw_sample(set: &DecompositionSet, n_samples: usize, seed: u64) -> Result<SamplePlan, DecompositionError> {
    if set.is_empty() {
        return Err(DecompositionError::EmptySet);
    }
    if n_samples == 0 {
        return Err(DecompositionError::ZeroSamples);
    }
    let d = set.len();
    let mut mt = Mt64::new(seed);
    let mut assignments = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut bits = Vec::with_capacity(d);
        let mut word = 0u64;
        for k in 0..d {
            if k % 64 == 0 {
                word = mt.next_u64();
            }
            bits.push(word >> (k % 64) & 1 == 1);
        }
        assignments.push(bits);
    }
    Ok(SamplePlan {
        decomposition: set.clone(),
        seed,
        size: n_samples,
        assignments,
    })
}

/// The `k`-th assignment in lexicographic order: the first (lowest) variable
/// is the most significant bit.
pub fn family_bits(d: usize, k: u64) -> Vec<bool> {
    (0..d).map(|i| k >> (d - 1 - i) & 1 == 1).collect()
}

/// Lazily yields all `2^d` assignments of `set` in lexicographic order.
pub fn family_assignments(
    set: &DecompositionSet,
    max_d: usize,
) -> Result<impl Iterator<Item = Assignment> + '_, DecompositionError> {
    let d = set.len();
    if d > max_d || d >= 64 {
        return Err(DecompositionError::OverBudget { d, max: max_d });
    }
    Ok((0..1u64 << d).map(move |k| set.assignment(&family_bits(d, k))))
}

/// All members of the decomposition family `C[X/(a_1..a_d)]`, lexicographic
/// in the assignment.
pub fn enumerate_family<'a>(
    formula: &'a CnfFormula,
    set: &'a DecompositionSet,
    max_d: usize,
) -> Result<impl Iterator<Item = (Assignment, CnfFormula)> + 'a, DecompositionError> {
    set.check_range(formula.num_vars())?;
    let assignments = family_assignments(set, max_d)?;
    Ok(assignments.map(move |a| {
        let member = formula.substitute(&a).expect("assignment is in range");
        (a, member)
    }))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-point sampling seed: SplitMix64 folded over the run seed and the
/// set's variables. Makes `F` a fixed function of the decomposition set
/// for a given run seed.
pub fn point_seed(run_seed: u64, set: &DecompositionSet) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ set.len() as u64);
    for &v in set.vars() {
        h = splitmix64(h ^ u64::from(v));
    }
    h
}
