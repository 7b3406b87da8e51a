//! Three-party secret-sharing engines and the server-side algorithms built
//! on them: zone aggregation, charge identification and per-user deviation
//! totals.
//!
//! Two engines implement [`Engine`]: [`IdealEngine`] computes in the clear
//! and serves as the reference, [`ReplicatedEngine`] is semi-honest
//! replicated sharing where party `i` holds components `(x_i, x_{i+1})`.

mod algorithms;
mod ideal;
pub mod program;
mod replicated;
mod transport;

pub use algorithms::{aggregate_user_deviation, aggregate_user_deviations_many, aggregate_zone, charge_selector, identify_s_cs, identify_s_cs_many, SharedTuple, ZoneShares};
pub use ideal::{IdealEngine, IdealShared};
pub use replicated::{ReplicatedEngine, ReplicatedShared, STATISTICAL_SECURITY};
pub use transport::{EngineStats, PhaseStats, Transport};

use ark_ff::PrimeField;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::algebra::SignedBound;

pub const PARTIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MpcError {
    #[error("operands belong to different sessions ({0} vs {1})")]
    SessionMismatch(u64, u64),
    #[error("replicated component {component} disagrees between holders")]
    Inconsistent { component: usize },
    #[error("need shares from at least {needed} distinct parties")]
    NotEnoughShares { needed: usize },
    #[error("share has the wrong layout for this engine")]
    Malformed,
    #[error("value outside the signed comparison range")]
    Range,
    #[error("transport lost a message from party {from} to party {to}")]
    Transport { from: usize, to: usize },
}

/// Engine choice, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Ideal,
    Replicated,
}

impl std::str::FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "replicated" => Ok(Self::Replicated),
            other => Err(format!("unknown engine `{other}`")),
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ideal => "ideal",
            Self::Replicated => "replicated",
        })
    }
}

/// One party's piece of a shared value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share<F> {
    pub party: u8,
    pub components: Vec<F>,
}

/// Interface shared by both engines. Values held jointly by the three
/// servers are `Self::Shared`; a dealer outside the engine produces
/// per-party [`Share`]s that the servers `join`.
pub trait Engine<F: PrimeField> {
    type Shared: Clone + std::fmt::Debug;

    fn kind(&self) -> EngineKind;
    fn session(&self) -> u64;

    /// Splits `x` into three per-party shares (run by a dealer).
    fn deal<R: RngCore + CryptoRng>(x: F, rng: &mut R) -> [Share<F>; PARTIES];
    /// Recombines per-party shares, checking redundancy where the layout has it.
    fn reconstruct(shares: &[Share<F>]) -> Result<F, MpcError>;

    /// Loads dealt shares, one per party, into the servers' state.
    fn join(&self, shares: &[Share<F>; PARTIES]) -> Result<Self::Shared, MpcError>;
    /// Each party's piece of a shared value.
    fn split(&self, x: &Self::Shared) -> [Share<F>; PARTIES];

    fn constant(&self, c: F) -> Self::Shared;
    fn add(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError>;
    fn sub(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError>;
    fn add_public(&self, a: &Self::Shared, c: F) -> Self::Shared;
    fn mul_public(&self, a: &Self::Shared, c: F) -> Self::Shared;

    /// One multiplication gate per pair, all in one round.
    fn mul_many(&mut self, pairs: &[(Self::Shared, Self::Shared)]) -> Result<Vec<Self::Shared>, MpcError>;
    /// Opens values to all three servers.
    fn open_many(&mut self, xs: &[Self::Shared]) -> Result<Vec<F>, MpcError>;
    /// Shared bits `[x >= 0]`; one comparison each.
    fn ge_zero_many(&mut self, xs: &[Self::Shared], bound: SignedBound) -> Result<Vec<Self::Shared>, MpcError>;
    /// Shared bits `([x > 0], [x < 0])`; one comparison each.
    fn sign_test_many(&mut self, xs: &[Self::Shared], bound: SignedBound)
        -> Result<Vec<(Self::Shared, Self::Shared)>, MpcError>;

    fn stats(&self) -> &EngineStats;
    fn stats_mut(&mut self) -> &mut EngineStats;

    fn mul(&mut self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError> {
        Ok(self.mul_many(&[(a.clone(), b.clone())])?.remove(0))
    }

    fn open(&mut self, x: &Self::Shared) -> Result<F, MpcError> {
        Ok(self.open_many(std::slice::from_ref(x))?.remove(0))
    }

    fn sign_test(&mut self, x: &Self::Shared, bound: SignedBound) -> Result<(Self::Shared, Self::Shared), MpcError> {
        Ok(self.sign_test_many(std::slice::from_ref(x), bound)?.remove(0))
    }

    fn sum<'a, I>(&self, items: I) -> Result<Self::Shared, MpcError>
    where
        I: IntoIterator<Item = &'a Self::Shared>,
        Self::Shared: 'a,
    {
        let mut acc = self.constant(F::zero());
        for x in items {
            acc = self.add(&acc, x)?;
        }
        Ok(acc)
    }
}
