//! Keystream generators and their SAT encodings.
//!
//! Two families are supported. A5/1 has three LFSRs with majority clocking;
//! the keystream bit is the XOR of the register MSBs after each clock. Bivium
//! (variant B) has two shift registers with quadratic feedback and is
//! Trivium with the third register removed. Instances start from the
//! registers' contents after initialization; the key and IV loading phases
//! are not modeled.
//!
//! Register cells are numbered from the end where feedback enters. For A5/1
//! that is bit 0 (the LSB of the usual word layout); for Bivium it is `s1`
//! (resp. `s94`).

mod encode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encode::{encode, CryptoInstance, VariableMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "A5_1")]
    A51,
    #[serde(rename = "BIVIUM")]
    Bivium,
}

impl std::str::FromStr for Family {
    type Err = CipherError;
    fn from_str(s: &str) -> Result<Family, CipherError> {
        match s.to_ascii_lowercase().replace(['-', '/', '_'], "").as_str() {
            "a51" => Ok(Family::A51),
            "bivium" | "biviumb" => Ok(Family::Bivium),
            _ => Err(CipherError::UnknownFamily(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("state has {got} bits, generator expects {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("keystream has {got} bits, generator expects {expected}")]
    KeystreamLength { expected: usize, got: usize },
    #[error("keystream length must be at least 1")]
    EmptyKeystream,
    #[error("{family:?} needs {expected} register lengths, got {got}")]
    RegisterCount {
        family: Family,
        expected: usize,
        got: usize,
    },
    #[error("register lengths must be at least 2, got {0}")]
    RegisterTooShort(usize),
    #[error("unknown generator family `{0}`")]
    UnknownFamily(String),
}

/// One majority-clocked LFSR. Positions are 0-based from the feedback end.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    pub len: usize,
    pub taps: Vec<usize>,
    pub clock_bit: usize,
}

/// One Bivium register. Positions are 1-based from the feedback end.
///
/// The feedback into a register is the XOR of the *other* register's
/// `linear` cells, the AND of its `and_pair`, and this register's own
/// `self_tap`. The keystream bit is the XOR of both registers' `linear`
/// cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiviumRegister {
    pub len: usize,
    pub linear: [usize; 2],
    pub and_pair: [usize; 2],
    pub self_tap: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    Majority { registers: [Lfsr; 3] },
    Bivium { a: BiviumRegister, b: BiviumRegister },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub family: Family,
    pub structure: Structure,
    pub keystream_len: usize,
}

pub const A51_LENGTHS: [usize; 3] = [19, 22, 23];
pub const BIVIUM_LENGTHS: [usize; 2] = [93, 84];

/// Keystream presets.
pub const A51_KEYSTREAM_LEN: usize = 144;
pub const A51_SHORT_KEYSTREAM_LEN: usize = 114;
pub const BIVIUM_KEYSTREAM_LEN: usize = 200;

fn a51_registers() -> [Lfsr; 3] {
    [
        Lfsr {
            len: 19,
            taps: vec![13, 16, 17, 18],
            clock_bit: 8,
        },
        Lfsr {
            len: 22,
            taps: vec![20, 21],
            clock_bit: 10,
        },
        Lfsr {
            len: 23,
            taps: vec![7, 20, 21, 22],
            clock_bit: 10,
        },
    ]
}

fn bivium_registers() -> (BiviumRegister, BiviumRegister) {
    (
        BiviumRegister {
            len: 93,
            linear: [66, 93],
            and_pair: [91, 92],
            self_tap: 69,
        },
        // s162, s177, s175, s176, s171 relative to s94
        BiviumRegister {
            len: 84,
            linear: [69, 84],
            and_pair: [82, 83],
            self_tap: 78,
        },
    )
}

impl GeneratorSpec {
    pub fn a5_1(keystream_len: usize) -> Result<GeneratorSpec, CipherError> {
        if keystream_len == 0 {
            return Err(CipherError::EmptyKeystream);
        }
        Ok(GeneratorSpec {
            name: "A5_1".into(),
            family: Family::A51,
            structure: Structure::Majority {
                registers: a51_registers(),
            },
            keystream_len,
        })
    }

    pub fn bivium(keystream_len: usize) -> Result<GeneratorSpec, CipherError> {
        if keystream_len == 0 {
            return Err(CipherError::EmptyKeystream);
        }
        let (a, b) = bivium_registers();
        Ok(GeneratorSpec {
            name: "BIVIUM".into(),
            family: Family::Bivium,
            structure: Structure::Bivium { a, b },
            keystream_len,
        })
    }

    pub fn standard(family: Family) -> GeneratorSpec {
        match family {
            Family::A51 => GeneratorSpec::a5_1(A51_KEYSTREAM_LEN),
            Family::Bivium => GeneratorSpec::bivium(BIVIUM_KEYSTREAM_LEN),
        }
        .expect("preset keystream length is positive")
    }

    pub fn register_lengths(&self) -> Vec<usize> {
        match &self.structure {
            Structure::Majority { registers } => registers.iter().map(|r| r.len).collect(),
            Structure::Bivium { a, b } => vec![a.len, b.len],
        }
    }

    pub fn state_bits(&self) -> usize {
        self.register_lengths().iter().sum()
    }

    pub fn with_keystream_len(&self, keystream_len: usize) -> Result<GeneratorSpec, CipherError> {
        if keystream_len == 0 {
            return Err(CipherError::EmptyKeystream);
        }
        Ok(GeneratorSpec {
            keystream_len,
            ..self.clone()
        })
    }
}

/// A miniature generator with the same clocking and feedback topology.
///
/// A5/1 taps keep their distance from the MSB (taps that would fall off the
/// register are dropped) and clock bits scale as `floor(c * L' / L)`.
/// Bivium cell positions scale as `ceil(p * L' / L)`; distinct cells may
/// collide in very short registers. The published lengths give back the
/// standard generator.
pub fn make_weakened(family: Family, lengths: &[usize], keystream_len: usize) -> Result<GeneratorSpec, CipherError> {
    if keystream_len == 0 {
        return Err(CipherError::EmptyKeystream);
    }
    let expected = match family {
        Family::A51 => 3,
        Family::Bivium => 2,
    };
    if lengths.len() != expected {
        return Err(CipherError::RegisterCount {
            family,
            expected,
            got: lengths.len(),
        });
    }
    if let Some(&l) = lengths.iter().find(|&&l| l < 2) {
        return Err(CipherError::RegisterTooShort(l));
    }
    let name = |base: &str| {
        let full = match family {
            Family::A51 => &A51_LENGTHS[..],
            Family::Bivium => &BIVIUM_LENGTHS[..],
        };
        if lengths == full {
            base.to_string()
        } else {
            let l: Vec<String> = lengths.iter().map(|l| l.to_string()).collect();
            format!("{base}-mini({})", l.join(","))
        }
    };
    let structure = match family {
        Family::A51 => {
            let full = a51_registers();
            let regs: Vec<Lfsr> = full
                .iter()
                .zip(lengths)
                .map(|(r, &len)| Lfsr {
                    len,
                    taps: r.taps.iter().filter_map(|&t| (len + t).checked_sub(r.len)).collect(),
                    clock_bit: r.clock_bit * len / r.len,
                })
                .collect();
            Structure::Majority {
                registers: regs.try_into().expect("three registers"),
            }
        }
        Family::Bivium => {
            let (a, b) = bivium_registers();
            let scale = |r: &BiviumRegister, len: usize| {
                let p = |x: usize| (x * len).div_ceil(r.len).clamp(1, len);
                BiviumRegister {
                    len,
                    linear: r.linear.map(p),
                    and_pair: r.and_pair.map(p),
                    self_tap: p(r.self_tap),
                }
            };
            Structure::Bivium {
                a: scale(&a, lengths[0]),
                b: scale(&b, lengths[1]),
            }
        }
    };
    Ok(GeneratorSpec {
        name: name(match family {
            Family::A51 => "A5_1",
            Family::Bivium => "BIVIUM",
        }),
        family,
        structure,
        keystream_len,
    })
}

fn majority(a: bool, b: bool, c: bool) -> bool {
    (a & b) | (a & c) | (b & c)
}

fn shift_in(reg: &mut [bool], bit: bool) {
    reg.rotate_right(1);
    reg[0] = bit;
}

/// Clocks an LFSR once.
pub(crate) fn clock_lfsr(reg: &mut [bool], taps: &[usize]) {
    let fb = taps.iter().fold(false, |acc, &t| acc ^ reg[t]);
    shift_in(reg, fb);
}

/// The first `spec.keystream_len` keystream bits from `state`.
///
/// A5/1 state order: R1 bits 0..L1, then R2, then R3. Bivium: `s1..s177`.
pub fn reference_keystream(spec: &GeneratorSpec, state: &[bool]) -> Result<Vec<bool>, CipherError> {
    if state.len() != spec.state_bits() {
        return Err(CipherError::StateLength {
            expected: spec.state_bits(),
            got: state.len(),
        });
    }
    let mut out = Vec::with_capacity(spec.keystream_len);
    match &spec.structure {
        Structure::Majority { registers } => {
            let mut regs: Vec<Vec<bool>> = Vec::with_capacity(3);
            let mut at = 0;
            for r in registers {
                regs.push(state[at..at + r.len].to_vec());
                at += r.len;
            }
            for _ in 0..spec.keystream_len {
                let c: Vec<bool> = registers.iter().zip(&regs).map(|(r, s)| s[r.clock_bit]).collect();
                let m = majority(c[0], c[1], c[2]);
                for i in 0..3 {
                    if c[i] == m {
                        clock_lfsr(&mut regs[i], &registers[i].taps);
                    }
                }
                let z = registers
                    .iter()
                    .zip(&regs)
                    .fold(false, |acc, (r, s)| acc ^ s[r.len - 1]);
                out.push(z);
            }
        }
        Structure::Bivium { a, b } => {
            let mut ra = state[..a.len].to_vec();
            let mut rb = state[a.len..].to_vec();
            let cell = |r: &[bool], p: usize| r[p - 1];
            for _ in 0..spec.keystream_len {
                let la = cell(&ra, a.linear[0]) ^ cell(&ra, a.linear[1]);
                let lb = cell(&rb, b.linear[0]) ^ cell(&rb, b.linear[1]);
                out.push(la ^ lb);
                let t1 = la ^ (cell(&ra, a.and_pair[0]) & cell(&ra, a.and_pair[1])) ^ cell(&rb, b.self_tap);
                let t2 = lb ^ (cell(&rb, b.and_pair[0]) & cell(&rb, b.and_pair[1])) ^ cell(&ra, a.self_tap);
                shift_in(&mut ra, t2);
                shift_in(&mut rb, t1);
            }
        }
    }
    Ok(out)
}

/// Hex with the first bit as the most significant bit of the first byte.
pub fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(8)
        .map(|c| {
            let byte = c
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)));
            format!("{byte:02x}")
        })
        .collect()
}

/// Inverse of [`bits_to_hex`], truncated to `len` bits.
pub fn hex_to_bits(hex: &str, len: usize) -> Option<Vec<bool>> {
    let hex = hex.trim();
    if !hex.len().is_multiple_of(2) || hex.len() * 4 < len {
        return None;
    }
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for i in (0..hex.len()).step_by(2) {
        let byte = u8::from_str_radix(hex.get(i..i + 2)?, 16).ok()?;
        bits.extend((0..8).map(|k| byte >> (7 - k) & 1 == 1));
    }
    bits.truncate(len);
    Some(bits)
}
