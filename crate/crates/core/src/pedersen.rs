//! Pedersen commitments `c = m*g + r*h` over Ristretto255.
//!
//! Serialized commitments are the 32-byte compressed Ristretto encoding;
//! randomness serializes as the 32-byte little-endian canonical scalar.

use std::iter::Sum;
use std::ops::Add;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};

use crate::algebra::CommitmentGroup;

pub const COMMITMENT_BYTES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment(RistrettoPoint);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitRandomness(Scalar);

impl CommitRandomness {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(Scalar::random(rng))
    }

    pub fn zero() -> Self {
        Self(Scalar::ZERO)
    }

    pub fn from_scalar(s: Scalar) -> Self {
        Self(s)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Option<Self> {
        Option::from(Scalar::from_canonical_bytes(bytes)).map(Self)
    }
}

impl Add for CommitRandomness {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sum for CommitRandomness {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), Add::add)
    }
}

/// Signed message as a scalar mod l.
pub fn message_scalar(m: i128) -> Scalar {
    let mag = Scalar::from(m.unsigned_abs());
    if m < 0 {
        -mag
    } else {
        mag
    }
}

pub fn commit(m: i128, r: &CommitRandomness) -> Commitment {
    let grp = CommitmentGroup::get();
    Commitment(grp.mul_g(&message_scalar(m)) + grp.mul_h(&r.0))
}

pub fn open(c: &Commitment, m: i128, r: &CommitRandomness) -> bool {
    commit(m, r) == *c
}

/// Commitment to `m1 + m2` under randomness `r1 + r2`.
pub fn combine(c1: &Commitment, c2: &Commitment) -> Commitment {
    Commitment(c1.0 + c2.0)
}

impl Commitment {
    pub fn identity() -> Self {
        Self(RistrettoPoint::identity())
    }

    pub fn to_bytes(&self) -> [u8; COMMITMENT_BYTES] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let c = CompressedRistretto::from_slice(bytes).ok()?;
        c.decompress().map(Self)
    }
}

impl Default for Commitment {
    fn default() -> Self {
        Self::identity()
    }
}

impl Add for Commitment {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        combine(&self, &rhs)
    }
}

impl Sum for Commitment {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::identity(), Add::add)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn zero_commitment_is_identity() {
        assert_eq!(commit(0, &CommitRandomness::zero()), Commitment::identity());
    }

    #[test]
    fn commit_is_deterministic_and_randomized() {
        let mut rng = rng();
        let r1 = CommitRandomness::random(&mut rng);
        let r2 = CommitRandomness::random(&mut rng);
        assert_eq!(commit(5, &r1), commit(5, &r1));
        assert_ne!(commit(5, &r1), commit(5, &r2));
    }

    #[test]
    fn open_examples() {
        let mut rng = rng();
        let r = CommitRandomness::random(&mut rng);
        let r2 = CommitRandomness::random(&mut rng);
        let c = commit(7, &r);
        assert!(open(&c, 7, &r));
        assert!(!open(&c, 8, &r));
        assert!(!open(&c, 7, &r2));
    }

    #[test]
    fn combine_examples() {
        let mut rng = rng();
        let r1 = CommitRandomness::random(&mut rng);
        let r2 = CommitRandomness::random(&mut rng);
        let c = combine(&commit(3, &r1), &commit(4, &r2));
        assert!(open(&c, 7, &(r1 + r2)));
        assert_eq!(combine(&commit(3, &r1), &commit(0, &CommitRandomness::zero())), commit(3, &r1));
    }

    #[test]
    fn fold_of_48_commitments() {
        let mut rng = rng();
        let items: Vec<(i128, CommitRandomness)> = (0..48)
            .map(|_| (rng.gen_range(-4095..4096), CommitRandomness::random(&mut rng)))
            .collect();
        let folded: Commitment = items.iter().map(|(m, r)| commit(*m, r)).sum();
        let m_sum: i128 = items.iter().map(|(m, _)| m).sum();
        let r_sum: CommitRandomness = items.iter().map(|(_, r)| *r).sum();
        assert!(open(&folded, m_sum, &r_sum));
    }

    #[test]
    fn negative_messages_cancel() {
        let mut rng = rng();
        let r1 = CommitRandomness::random(&mut rng);
        let r2 = CommitRandomness::random(&mut rng);
        assert!(open(&(commit(1200, &r1) + commit(-1200, &r2)), 0, &(r1 + r2)));
    }

    #[test]
    fn serialization_roundtrip() {
        let mut rng = rng();
        let r = CommitRandomness::random(&mut rng);
        let c = commit(-17, &r);
        assert_eq!(Commitment::from_bytes(&c.to_bytes()), Some(c));
        assert_eq!(CommitRandomness::from_bytes(r.to_bytes()), Some(r));
        assert_eq!(Commitment::from_bytes(&[0xff; 32]), None);
    }

    #[test]
    fn no_second_opening_in_small_window() {
        let mut rng = rng();
        let r = CommitRandomness::random(&mut rng);
        let c = commit(100, &r);
        for m in -2000..2000 {
            if m != 100 {
                assert!(!open(&c, m, &r));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn homomorphism(m1 in -(1i128 << 60)..(1i128 << 60), m2 in -(1i128 << 60)..(1i128 << 60), seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let r1 = CommitRandomness::random(&mut rng);
            let r2 = CommitRandomness::random(&mut rng);
            prop_assert!(open(&combine(&commit(m1, &r1), &commit(m2, &r2)), m1 + m2, &(r1 + r2)));
        }
    }
}
