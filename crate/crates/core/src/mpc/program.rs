//! Random straight-line programs over the engine operations, for checking
//! that engines agree.

use ark_ff::PrimeField;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{Engine, MpcError};
use crate::algebra::{encode_signed, SignedBound};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input(i128),
    Add(usize, usize),
    Sub(usize, usize),
    AddPublic(usize, i128),
    MulPublic(usize, i128),
    Mul(usize, usize),
    GeZero(usize),
    /// Pushes `[x > 0]` then `[x < 0]`.
    Sign(usize),
}

#[derive(Debug, Clone)]
pub struct Program {
    pub ops: Vec<Op>,
    pub bound: SignedBound,
    /// Clear value of every register, computed while generating.
    pub expected: Vec<i128>,
}

const MAGNITUDE_CAP: i128 = 1 << 100;

/// Generates `len` operations; comparisons are only emitted on registers
/// whose value fits `bound`.
pub fn random_program<F: PrimeField>(rng: &mut ChaCha20Rng, len: usize, bound: SignedBound) -> Program {
    let mut ops = Vec::with_capacity(len);
    let mut vals: Vec<i128> = Vec::new();
    while ops.len() < len {
        if vals.len() < 2 {
            let x = rng.gen_range(-1000..=1000);
            ops.push(Op::Input(x));
            vals.push(x);
            continue;
        }
        let a = rng.gen_range(0..vals.len());
        let b = rng.gen_range(0..vals.len());
        let (va, vb) = (vals[a], vals[b]);
        let op = match rng.gen_range(0..8) {
            0 => {
                let x = rng.gen_range(-1000..=1000);
                vals.push(x);
                Op::Input(x)
            }
            1 => {
                vals.push(va + vb);
                Op::Add(a, b)
            }
            2 => {
                vals.push(va - vb);
                Op::Sub(a, b)
            }
            3 => {
                let c = rng.gen_range(-50..=50);
                vals.push(va + c);
                Op::AddPublic(a, c)
            }
            4 => {
                let c = rng.gen_range(-5..=5);
                vals.push(va * c);
                Op::MulPublic(a, c)
            }
            5 if (va.abs() < MAGNITUDE_CAP >> 50) && (vb.abs() < 1 << 50) => {
                vals.push(va * vb);
                Op::Mul(a, b)
            }
            6 if bound.contains(va) => {
                vals.push((va >= 0) as i128);
                Op::GeZero(a)
            }
            7 if bound.contains(va) => {
                vals.push((va > 0) as i128);
                vals.push((va < 0) as i128);
                Op::Sign(a)
            }
            _ => continue,
        };
        if vals.iter().any(|v| v.abs() >= MAGNITUDE_CAP) {
            // Keep every register well inside the field.
            vals.truncate(vals.len() - if matches!(op, Op::Sign(_)) { 2 } else { 1 });
            continue;
        }
        ops.push(op);
    }
    Program {
        ops,
        bound,
        expected: vals,
    }
}

/// Runs the program with inputs dealt from `rng` and opens every register.
pub fn run_program<F: PrimeField, E: Engine<F>>(
    engine: &mut E,
    program: &Program,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<F>, MpcError> {
    let mut regs: Vec<E::Shared> = Vec::new();
    let f = |x: i128| encode_signed::<F>(x);
    for op in &program.ops {
        match *op {
            Op::Input(x) => {
                let shares = E::deal(f(x), rng);
                regs.push(engine.join(&shares)?);
            }
            Op::Add(a, b) => regs.push(engine.add(&regs[a], &regs[b])?),
            Op::Sub(a, b) => regs.push(engine.sub(&regs[a], &regs[b])?),
            Op::AddPublic(a, c) => regs.push(engine.add_public(&regs[a], f(c))),
            Op::MulPublic(a, c) => regs.push(engine.mul_public(&regs[a], f(c))),
            Op::Mul(a, b) => {
                let r = engine.mul(&regs[a], &regs[b])?;
                regs.push(r);
            }
            Op::GeZero(a) => {
                let r = engine.ge_zero_many(std::slice::from_ref(&regs[a]), program.bound)?.remove(0);
                regs.push(r);
            }
            Op::Sign(a) => {
                let (p, n) = engine.sign_test(&regs[a], program.bound)?;
                regs.push(p);
                regs.push(n);
            }
        }
    }
    engine.open_many(&regs)
}
