//! Prime-order group with two generators of unknown relative discrete log.

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use once_cell::sync::Lazy;
use sha2::Sha512;

/// Domain tag hashed to obtain `h`.
pub const H_DOMAIN_TAG: &[u8] = b"lembill/pedersen/h/v1";

/// Ristretto255 with `g` the standard basepoint and `h` hashed to the group.
pub struct CommitmentGroup {
    h: RistrettoPoint,
    h_table: RistrettoBasepointTable,
}

static GROUP: Lazy<CommitmentGroup> = Lazy::new(|| {
    let h = RistrettoPoint::hash_from_bytes::<Sha512>(H_DOMAIN_TAG);
    CommitmentGroup {
        h,
        h_table: RistrettoBasepointTable::create(&h),
    }
});

impl CommitmentGroup {
    pub fn get() -> &'static CommitmentGroup {
        &GROUP
    }

    pub fn g(&self) -> RistrettoPoint {
        RISTRETTO_BASEPOINT_TABLE.basepoint()
    }

    pub fn h(&self) -> RistrettoPoint {
        self.h
    }

    pub fn mul_g(&self, k: &Scalar) -> RistrettoPoint {
        RISTRETTO_BASEPOINT_TABLE * k
    }

    pub fn mul_h(&self, k: &Scalar) -> RistrettoPoint {
        &self.h_table * k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curve25519_dalek::traits::Identity;

    #[test]
    fn generators_are_distinct_and_nontrivial() {
        let grp = CommitmentGroup::get();
        assert_ne!(grp.g(), grp.h());
        assert_ne!(grp.h(), RistrettoPoint::identity());
        // Prime order: l * h = identity.
        let l_minus_one = -Scalar::ONE;
        assert_eq!(grp.h() * l_minus_one + grp.h(), RistrettoPoint::identity());
    }

    #[test]
    fn tables_match_plain_multiplication() {
        let grp = CommitmentGroup::get();
        let k = Scalar::from(123_456_789u64);
        assert_eq!(grp.mul_g(&k), grp.g() * k);
        assert_eq!(grp.mul_h(&k), grp.h() * k);
    }
}
