use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{bits_to_hex, CipherError, GeneratorSpec, Structure};
use crate::cnf::{CnfFormula, Lit, Var};
use crate::decomposition::DecompositionSet;

/// Where each kind of variable lives. Ranges are inclusive, 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMap {
    /// Register name to its first and last state variable; the first one is
    /// the cell where feedback enters.
    pub registers: BTreeMap<String, (Var, Var)>,
    pub keystream: (Var, Var),
    /// `None` when no auxiliary variables were needed.
    pub auxiliary: Option<(Var, Var)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CryptoInstance {
    pub spec: GeneratorSpec,
    #[serde(skip)]
    pub cnf: CnfFormula,
    /// The state variables; a strong unit propagation backdoor set.
    pub state_vars: DecompositionSet,
    #[serde(serialize_with = "ser_bits")]
    pub keystream: Vec<bool>,
    pub variables: VariableMap,
}

fn ser_bits<S: serde::Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&bits.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
}

impl CryptoInstance {
    /// The JSON sidecar written next to the DIMACS file.
    pub fn sidecar(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("instance serializes");
        v["keystream_hex"] = bits_to_hex(&self.keystream).into();
        v["num_vars"] = self.cnf.num_vars().into();
        v["num_clauses"] = self.cnf.num_clauses().into();
        v
    }

    pub fn keystream_var(&self, t: usize) -> Var {
        self.variables.keystream.0 + t as Var
    }
}

/// Clause sink with fresh-variable allocation and a small gate library.
struct Gates {
    next: Var,
    clauses: Vec<Vec<Lit>>,
    constant_false: Option<Var>,
}

impl Gates {
    fn fresh(&mut self) -> Var {
        self.next += 1;
        self.next
    }

    fn clause(&mut self, lits: &[Lit]) {
        self.clauses.push(lits.to_vec());
    }

    fn zero(&mut self) -> Var {
        if let Some(v) = self.constant_false {
            return v;
        }
        let v = self.fresh();
        self.clause(&[Lit::neg(v)]);
        self.constant_false = Some(v);
        v
    }

    /// `out = a xor b`.
    fn xor2_into(&mut self, a: Var, b: Var, out: Var) {
        let (a, b, o) = (Lit::pos(a), Lit::pos(b), Lit::pos(out));
        self.clause(&[!a, !b, !o]);
        self.clause(&[a, b, !o]);
        self.clause(&[a, !b, o]);
        self.clause(&[!a, b, o]);
    }

    /// XOR of `inputs` as a chain of two-input gates. Repeated inputs
    /// cancel. The last gate writes into `out` when given.
    fn xor(&mut self, inputs: &[Var], out: Option<Var>) -> Var {
        let mut counts: BTreeMap<Var, usize> = BTreeMap::new();
        for &v in inputs {
            *counts.entry(v).or_default() += 1;
        }
        let mut vars: Vec<Var> = Vec::new();
        for &v in inputs {
            if counts[&v] % 2 == 1 && !vars.contains(&v) {
                vars.push(v);
            }
        }
        match (vars.len(), out) {
            (0, None) => self.zero(),
            (0, Some(o)) => {
                self.clause(&[Lit::neg(o)]);
                o
            }
            (1, None) => vars[0],
            (1, Some(o)) => {
                self.clause(&[Lit::neg(vars[0]), Lit::pos(o)]);
                self.clause(&[Lit::pos(vars[0]), Lit::neg(o)]);
                o
            }
            (k, _) => {
                let mut acc = vars[0];
                for (i, &v) in vars[1..].iter().enumerate() {
                    let target = match out {
                        Some(o) if i == k - 2 => o,
                        _ => self.fresh(),
                    };
                    self.xor2_into(acc, v, target);
                    acc = target;
                }
                acc
            }
        }
    }

    fn and(&mut self, a: Var, b: Var) -> Var {
        if a == b {
            return a;
        }
        let o = self.fresh();
        let (la, lb, lo) = (Lit::pos(a), Lit::pos(b), Lit::pos(o));
        self.clause(&[!lo, la]);
        self.clause(&[!lo, lb]);
        self.clause(&[lo, !la, !lb]);
        o
    }

    fn majority(&mut self, a: Var, b: Var, c: Var) -> Var {
        let out = self.fresh();
        let (a, b, c, o) = (Lit::pos(a), Lit::pos(b), Lit::pos(c), Lit::pos(out));
        for (x, y) in [(a, b), (a, c), (b, c)] {
            self.clause(&[!x, !y, o]);
            self.clause(&[x, y, !o]);
        }
        out
    }

    /// `out = if s { a } else { b }`.
    fn mux(&mut self, s: Lit, a: Var, b: Var) -> Var {
        if a == b {
            return a;
        }
        let o = self.fresh();
        let (la, lb, lo) = (Lit::pos(a), Lit::pos(b), Lit::pos(o));
        self.clause(&[!s, !la, lo]);
        self.clause(&[!s, la, !lo]);
        self.clause(&[s, !lb, lo]);
        self.clause(&[s, lb, !lo]);
        // redundant, lets propagation settle the output when a == b in value
        self.clause(&[!la, !lb, lo]);
        self.clause(&[la, lb, !lo]);
        o
    }
}

/// Encodes keystream generation as CNF. Variables: state bits first (in
/// [`super::reference_keystream`] order), then one variable per keystream
/// bit, then auxiliaries. The known keystream is added as unit clauses.
pub fn encode(spec: &GeneratorSpec, keystream: &[bool]) -> Result<CryptoInstance, CipherError> {
    if keystream.len() != spec.keystream_len {
        return Err(CipherError::KeystreamLength {
            expected: spec.keystream_len,
            got: keystream.len(),
        });
    }
    let state_bits = spec.state_bits() as Var;
    let ks_first = state_bits + 1;
    let ks_len = keystream.len() as Var;
    let mut g = Gates {
        next: state_bits + ks_len,
        clauses: Vec::new(),
        constant_false: None,
    };
    let mut registers = BTreeMap::new();

    match &spec.structure {
        Structure::Majority { registers: lfsrs } => {
            let mut regs: Vec<Vec<Var>> = Vec::new();
            let mut at = 1;
            for (i, r) in lfsrs.iter().enumerate() {
                regs.push((at..at + r.len as Var).collect());
                registers.insert(format!("R{}", i + 1), (at, at + r.len as Var - 1));
                at += r.len as Var;
            }
            for t in 0..keystream.len() {
                let c: Vec<Var> = lfsrs.iter().zip(&regs).map(|(r, s)| s[r.clock_bit]).collect();
                let m = g.majority(c[0], c[1], c[2]);
                for i in 0..3 {
                    // clocked iff the clock bit agrees with the majority
                    let ci = c[i];
                    let differs = g.xor(&[ci, m], None);
                    let sel = Lit::neg(differs);
                    let taps: Vec<Var> = lfsrs[i].taps.iter().map(|&p| regs[i][p]).collect();
                    let fb = g.xor(&taps, None);
                    let old = regs[i].clone();
                    let mut new = Vec::with_capacity(old.len());
                    new.push(g.mux(sel, fb, old[0]));
                    for j in 1..old.len() {
                        new.push(g.mux(sel, old[j - 1], old[j]));
                    }
                    regs[i] = new;
                }
                let msbs: Vec<Var> = regs.iter().map(|r| *r.last().unwrap()).collect();
                g.xor(&msbs, Some(ks_first + t as Var));
            }
        }
        Structure::Bivium { a, b } => {
            let mut ra: Vec<Var> = (1..=a.len as Var).collect();
            let mut rb: Vec<Var> = (a.len as Var + 1..=state_bits).collect();
            registers.insert("A".into(), (1, a.len as Var));
            registers.insert("B".into(), (a.len as Var + 1, state_bits));
            let cell = |r: &[Var], p: usize| r[p - 1];
            for t in 0..keystream.len() {
                let lin_a = [cell(&ra, a.linear[0]), cell(&ra, a.linear[1])];
                let lin_b = [cell(&rb, b.linear[0]), cell(&rb, b.linear[1])];
                g.xor(&[lin_a[0], lin_a[1], lin_b[0], lin_b[1]], Some(ks_first + t as Var));
                if t + 1 == keystream.len() {
                    break;
                }
                let and_a = g.and(cell(&ra, a.and_pair[0]), cell(&ra, a.and_pair[1]));
                let and_b = g.and(cell(&rb, b.and_pair[0]), cell(&rb, b.and_pair[1]));
                let t1 = g.xor(&[lin_a[0], lin_a[1], and_a, cell(&rb, b.self_tap)], None);
                let t2 = g.xor(&[lin_b[0], lin_b[1], and_b, cell(&ra, a.self_tap)], None);
                ra.rotate_right(1);
                ra[0] = t2;
                rb.rotate_right(1);
                rb[0] = t1;
            }
        }
    }

    for (t, &bit) in keystream.iter().enumerate() {
        g.clause(&[Lit::new(ks_first + t as Var, bit)]);
    }
    let num_vars = g.next;
    let cnf = CnfFormula::new(num_vars, g.clauses).expect("encoder produces in-range literals");
    let state_vars = DecompositionSet::new((1..=state_bits).collect()).expect("state variables are nonzero");
    Ok(CryptoInstance {
        spec: spec.clone(),
        cnf,
        state_vars,
        keystream: keystream.to_vec(),
        variables: VariableMap {
            registers,
            keystream: (ks_first, state_bits + ks_len),
            auxiliary: (num_vars > state_bits + ks_len).then_some((state_bits + ks_len + 1, num_vars)),
        },
    })
}
