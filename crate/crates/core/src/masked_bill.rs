//! Additive one-time masking of readings and roles, masked bill accumulation
//! and the matching decryption keys.
//!
//! A reading `m` is masked as `mc = m + sk` and the role bit `d` as
//! `dc = d + sk_t`, with fresh keys per trading period. Bills are affine in
//! `(mc, dc)` with public coefficients, so the key authority can compute the
//! matching key `dk` from `(sk, sk_t)` and the same public coefficients.

use std::collections::HashSet;

use ark_ff::PrimeField;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{centered_lift, encode_signed, sample_uniform, AlgebraError, SignedBound};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("keys for user {user} in billing period {billing_period} were already issued")]
    DuplicateKeys { user: u32, billing_period: u32 },
    #[error("C_p and C_c set together, or a charge flag set without s")]
    InvalidContext,
    #[error(transparent)]
    Decode(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    Reading,
    Participation,
    Bill,
    PeriodKey,
}

/// A masked value tagged with its trading period and meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedValue<F> {
    pub value: F,
    pub period: usize,
    pub kind: MaskKind,
}

/// Per-user key sequences for one billing period.
#[derive(Debug, Clone)]
pub struct KeySet<F> {
    pub user: u32,
    pub billing_period: u32,
    pub sk: Vec<F>,
    pub sk_t: Vec<F>,
}

impl<F> KeySet<F> {
    pub fn periods(&self) -> usize {
        self.sk.len()
    }
}

/// Issues key sets and refuses to issue twice for the same (user, period).
#[derive(Debug, Default)]
pub struct KeyManager {
    issued: HashSet<(u32, u32)>,
}

impl KeyManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue<F: PrimeField, R: Rng + ?Sized>(
        &mut self,
        user: u32,
        billing_period: u32,
        periods: usize,
        rng: &mut R,
    ) -> Result<KeySet<F>, MaskError> {
        if !self.issued.insert((user, billing_period)) {
            return Err(MaskError::DuplicateKeys {
                user,
                billing_period,
            });
        }
        let sk = (0..periods).map(|_| sample_uniform(rng)).collect();
        let sk_t = (0..periods).map(|_| sample_uniform(rng)).collect();
        Ok(KeySet {
            user,
            billing_period,
            sk,
            sk_t,
        })
    }

    pub fn issued_count(&self) -> usize {
        self.issued.len()
    }
}

/// Deviation charges for one zone in one trading period.
///
/// `share_p`/`share_c` are the rounded per-user energy shares in Wh and
/// `dev_p = share_p * (FiT - TP)`, `dev_c = share_c * (RP - TP)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviationCosts {
    pub period: usize,
    pub share_p: i64,
    pub share_c: i64,
    pub dev_p: i128,
    pub dev_c: i128,
}

/// Charge flags for one user in one trading period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BillContext {
    pub c_p: bool,
    pub c_c: bool,
    pub s: bool,
    pub period: usize,
}

impl BillContext {
    pub fn new(c_p: bool, c_c: bool, s: bool, period: usize) -> Result<Self, MaskError> {
        if (c_p && c_c) || ((c_p || c_c) && !s) {
            return Err(MaskError::InvalidContext);
        }
        Ok(Self { c_p, c_c, s, period })
    }

    /// `C_p = (T > 0 and s)`, `C_c = (T < 0 and s)`.
    pub fn from_total(total: i64, s: bool, period: usize) -> Self {
        Self {
            c_p: total > 0 && s,
            c_c: total < 0 && s,
            s,
            period,
        }
    }
}

fn flag<F: PrimeField>(b: bool) -> F {
    if b {
        F::one()
    } else {
        F::zero()
    }
}

/// `x + key`.
pub fn mask<F: PrimeField>(x: F, key: F) -> F {
    x + key
}

/// `mc * TP + C_p * dc * dev_p + C_c * (1 - dc) * dev_c`.
pub fn bill_step<F: PrimeField>(mc: F, dc: F, tp: i64, costs: &DeviationCosts, ctx: &BillContext) -> F {
    let mut bc = mc * encode_signed::<F>(tp as i128);
    if ctx.c_p {
        bc += dc * encode_signed::<F>(costs.dev_p);
    }
    if ctx.c_c {
        bc += (F::one() - dc) * encode_signed::<F>(costs.dev_c);
    }
    bc
}

/// `sk * TP + C_p * sk_t * dev_p - C_c * sk_t * dev_c`.
pub fn period_key<F: PrimeField>(sk: F, sk_t: F, tp: i64, costs: &DeviationCosts, ctx: &BillContext) -> F {
    sk * encode_signed::<F>(tp as i128)
        + flag::<F>(ctx.c_p) * sk_t * encode_signed::<F>(costs.dev_p)
        - flag::<F>(ctx.c_c) * sk_t * encode_signed::<F>(costs.dev_c)
}

/// Sum of masked bills or of period keys.
pub fn aggregate<F: PrimeField, I: IntoIterator<Item = F>>(values: I) -> F {
    values.into_iter().fold(F::zero(), |acc, x| acc + x)
}

/// `BLc - DK` as a signed amount.
pub fn decrypt<F: PrimeField>(blc: F, dk: F, bound: SignedBound) -> Result<i128, MaskError> {
    Ok(centered_lift(blc - dk, bound)?)
}

/// Masked supplier balance change:
/// `-(C_p * dc * share_p * FiT + C_c * (1 - dc) * share_c * RP)`.
pub fn balance_step<F: PrimeField>(dc: F, costs: &DeviationCosts, ctx: &BillContext, fit: i64, rp: i64) -> F {
    let mut delta = F::zero();
    if ctx.c_p {
        delta -= dc * encode_signed::<F>(costs.share_p as i128 * fit as i128);
    }
    if ctx.c_c {
        delta -= (F::one() - dc) * encode_signed::<F>(costs.share_c as i128 * rp as i128);
    }
    delta
}

/// One user's contribution to the supplier balance key:
/// `-C_p * sk_t * share_p * FiT + C_c * sk_t * share_c * RP`.
pub fn balance_key_term<F: PrimeField>(sk_t: F, costs: &DeviationCosts, ctx: &BillContext, fit: i64, rp: i64) -> F {
    let mut term = F::zero();
    if ctx.c_p {
        term -= sk_t * encode_signed::<F>(costs.share_p as i128 * fit as i128);
    }
    if ctx.c_c {
        term += sk_t * encode_signed::<F>(costs.share_c as i128 * rp as i128);
    }
    term
}

/// Supplier balance key for one trading period: sum of the users' terms.
pub fn supplier_balance_key<F: PrimeField, I: IntoIterator<Item = F>>(terms: I) -> F {
    aggregate(terms)
}
