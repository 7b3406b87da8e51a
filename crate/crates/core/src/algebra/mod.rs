//! Field arithmetic, signed encoding and the group interfaces shared by the
//! cryptographic modules.

mod commitment_group;
mod field;
mod pairing;

pub use commitment_group::{CommitmentGroup, H_DOMAIN_TAG};
pub use field::{
    centered_lift, encode_signed, field_byte_len, field_from_bytes, field_to_bytes, field_to_u128,
    sample_uniform, BillingFieldConfig, F101Config, F257Config, Fq, SignedBound, F101, F257,
};
pub use pairing::{to_affine_g1, to_affine_g2, FixedBaseTable, PairingSuite};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlgebraError {
    #[error("value outside the signed range |y| < 2^{bits}")]
    OutOfRange { bits: u32 },
    #[error("bound 2^{bits} leaves no headroom in a {modulus_bits}-bit field")]
    BoundTooLarge { bits: u32, modulus_bits: u32 },
}
