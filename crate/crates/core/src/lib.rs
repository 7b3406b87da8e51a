//! Privacy-preserving billing for local energy markets.
//!
//! Users, smart meters, suppliers, three computation servers, a key authority
//! and the distribution operator exchange masked readings, commitments,
//! secret shares and inner-product ciphertexts so that each user is billed
//! exactly while suppliers never see meter readings or bids.

pub mod algebra;
pub mod masked_bill;
pub mod pedersen;
pub mod encoding;
pub mod fhipe;
pub mod mpc;
pub mod billing;
pub mod scenario;
pub mod protocol;
pub mod report;
