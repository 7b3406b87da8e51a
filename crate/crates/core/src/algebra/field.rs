//! Prime fields for masked values and secret shares, plus the signed
//! centered encoding used to carry money and energy amounts.

// The field derive emits a `feature = "asm"` cfg check.
#![allow(unexpected_cfgs, non_local_definitions)]

use ark_ff::fields::{Fp192, Fp64, MontBackend, MontConfig};
use ark_ff::{BigInteger, PrimeField};
use rand::Rng;

use super::AlgebraError;

/// q = 2^130 - 5.
#[derive(MontConfig)]
#[modulus = "1361129467683753853853498429727072845819"]
#[generator = "2"]
pub struct BillingFieldConfig;

/// Field used by protocol runs.
pub type Fq = Fp192<MontBackend<BillingFieldConfig, 3>>;

#[derive(MontConfig)]
#[modulus = "257"]
#[generator = "3"]
pub struct F257Config;

/// Small field for exhaustive tests; large enough for 7-bit signed values.
pub type F257 = Fp64<MontBackend<F257Config, 1>>;

#[derive(MontConfig)]
#[modulus = "101"]
#[generator = "2"]
pub struct F101Config;

/// Small field for exhaustive tests.
pub type F101 = Fp64<MontBackend<F101Config, 1>>;

/// Magnitude bound: every plaintext satisfies |x| < 2^bits and 2^(bits+1) < q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SignedBound {
    bits: u32,
}

impl SignedBound {
    pub fn new<F: PrimeField>(bits: u32) -> Result<Self, AlgebraError> {
        // q > 2^(MODULUS_BIT_SIZE - 1), so bits + 2 <= MODULUS_BIT_SIZE gives 2^(bits+1) < q.
        if bits == 0 || bits > 126 || bits + 2 > F::MODULUS_BIT_SIZE {
            return Err(AlgebraError::BoundTooLarge {
                bits,
                modulus_bits: F::MODULUS_BIT_SIZE,
            });
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// 2^bits.
    pub fn limit(&self) -> i128 {
        1i128 << self.bits
    }

    pub fn contains(&self, y: i128) -> bool {
        y.unsigned_abs() < self.limit() as u128
    }
}

/// The canonical representative of `x` as an integer, if it fits in 128 bits.
pub fn field_to_u128<F: PrimeField>(x: &F) -> Option<u128> {
    let big = x.into_bigint();
    let limbs = big.as_ref();
    if limbs.len() > 2 && limbs[2..].iter().any(|&l| l != 0) {
        return None;
    }
    let lo = limbs[0] as u128;
    let hi = limbs.get(1).copied().unwrap_or(0) as u128;
    Some(lo | (hi << 64))
}

/// Maps x to the representative y in (-q/2, q/2] and checks |y| < 2^L.
pub fn centered_lift<F: PrimeField>(x: F, bound: SignedBound) -> Result<i128, AlgebraError> {
    let negative = x.into_bigint() > F::MODULUS_MINUS_ONE_DIV_TWO;
    let mag = if negative { field_to_u128(&-x) } else { field_to_u128(&x) };
    match mag {
        Some(m) if m < bound.limit() as u128 => {
            let m = m as i128;
            Ok(if negative { -m } else { m })
        }
        _ => Err(AlgebraError::OutOfRange { bits: bound.bits }),
    }
}

/// Signed integer to residue mod q.
pub fn encode_signed<F: PrimeField>(y: i128) -> F {
    let mag = F::from(y.unsigned_abs());
    if y < 0 {
        -mag
    } else {
        mag
    }
}

/// Uniform field element drawn from `rng`.
pub fn sample_uniform<F: PrimeField, R: Rng + ?Sized>(rng: &mut R) -> F {
    F::rand(rng)
}

/// Canonical little-endian bytes of a field element, fixed width per field.
pub fn field_to_bytes<F: PrimeField>(x: &F) -> Vec<u8> {
    let width = field_byte_len::<F>();
    let mut out = x.into_bigint().to_bytes_le();
    out.truncate(width);
    out
}

/// Inverse of [`field_to_bytes`]; rejects non-canonical encodings.
pub fn field_from_bytes<F: PrimeField>(bytes: &[u8]) -> Option<F> {
    if bytes.len() != field_byte_len::<F>() {
        return None;
    }
    let x = F::from_le_bytes_mod_order(bytes);
    (field_to_bytes(&x) == bytes).then_some(x)
}

/// Serialized width of one element in bytes.
pub fn field_byte_len<F: PrimeField>() -> usize {
    (F::MODULUS_BIT_SIZE as usize).div_ceil(8)
}
