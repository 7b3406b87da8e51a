//! Party orchestration for one billing period: key setup, per-period
//! inputs and bill computation, bill release, deviation verification and
//! settlement, all over a logged in-process network.

mod flow;
mod party;
mod payload;
mod run;
mod transcript;

pub use flow::{check_information_flow, check_publication_reach, FlowViolation};
pub use party::{PartyId, PartyKind};
pub use payload::{size, Datum, Payload};
pub use run::{run_billing_period, KeyRegistry};
pub use transcript::{Envelope, Network, Step, Transcript, TranscriptEntry, TRANSCRIPT_HEADER};

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billing::{AuditOutcome, BillingError};
use crate::encoding::{EncodingError, Layout};
use crate::fhipe::IpeError;
use crate::masked_bill::MaskError;
use crate::mpc::{EngineKind, EngineStats, MpcError};
use crate::scenario::Scenario;

pub const LEDGER_SCHEMA: u32 = 1;

/// Who decides whether a user pays a deviation charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Approach {
    /// Suppliers compare encrypted readings and bids.
    SupplierCompare,
    /// The servers compare shared deviations.
    ServerCompare,
    /// Deviations are disclosed to suppliers.
    Disclosed,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Self::SupplierCompare, Self::ServerCompare, Self::Disclosed];

    pub fn number(&self) -> u8 {
        match self {
            Self::SupplierCompare => 1,
            Self::ServerCompare => 2,
            Self::Disclosed => 3,
        }
    }
}

impl From<Approach> for u8 {
    fn from(a: Approach) -> u8 {
        a.number()
    }
}

impl TryFrom<u8> for Approach {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(Self::SupplierCompare),
            2 => Ok(Self::ServerCompare),
            3 => Ok(Self::Disclosed),
            _ => Err(format!("approach must be 1, 2 or 3, got {n}")),
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<u8>().map_err(|e| e.to_string()).and_then(Self::try_from)
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub approach: Approach,
    pub engine: EngineKind,
    pub layout: Layout,
    /// Magnitude bits accepted when decoding bills and balances.
    pub bill_bits: u32,
    /// Index of the billing period; keys are fresh per index.
    pub billing_period: u32,
    pub seed: u64,
    pub faults: Vec<Fault>,
}

impl ProtocolConfig {
    pub fn new(approach: Approach, engine: EngineKind, seed: u64) -> Self {
        Self {
            approach,
            engine,
            layout: Layout::Compact,
            bill_bits: 100,
            billing_period: 0,
            seed,
            faults: vec![],
        }
    }
}

/// A single injected deviation from honest behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum Fault {
    /// The user shares `v + delta` instead of `v`.
    Deviation { user: u32, period: usize, delta: i64 },
    /// The meter masks `m + delta` instead of `m`.
    Reading { user: u32, period: usize, delta: i64 },
    /// The supplier reports `SCap + delta` to the operator.
    Capital { supplier: u32, delta: i64 },
    /// The user sends no tuple to the servers.
    Silent { user: u32, period: usize },
}

impl Fault {
    /// Checks the target exists in `scenario`.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ProtocolError> {
        let users = scenario.users.len() as u32;
        let periods = scenario.periods.len();
        let ok = match *self {
            Self::Deviation { user, period, .. } | Self::Reading { user, period, .. } | Self::Silent { user, period } => {
                user < users && period < periods
            }
            Self::Capital { supplier, .. } => supplier < scenario.suppliers,
        };
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::UnknownTarget(*self))
        }
    }
}

/// Adds a fault to the configuration after checking its target.
pub fn inject_fault(config: &mut ProtocolConfig, scenario: &Scenario, fault: Fault) -> Result<(), ProtocolError> {
    fault.validate(scenario)?;
    config.faults.push(fault);
    Ok(())
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("period {period}: no input from {culprit}")]
    MissingTuple { culprit: PartyId, period: usize },
    #[error("fault target does not exist: {0:?}")]
    UnknownTarget(Fault),
    #[error("{party}: {reason}")]
    Party { party: PartyId, reason: String },
    #[error(transparent)]
    Billing(#[from] BillingError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Ipe(#[from] IpeError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// A check that did not pass, with the party at fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Failure {
    /// The user's local bill differs from the supplier's.
    Acceptance {
        user: u32,
        #[serde(with = "crate::billing::i128_text")]
        received: i128,
        #[serde(with = "crate::billing::i128_text")]
        expected: i128,
    },
    /// The opened deviation total does not match the commitments.
    Verification { user: u32 },
    /// The operator's audit flags the supplier.
    Audit { supplier: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user: u32,
    pub supplier: u32,
    pub zone: u32,
    pub d: u8,
    /// Bill released by the supplier.
    pub bl: i128,
    /// The user's own computation.
    pub local_bl: i128,
    pub bl_lem: i128,
    pub accepted: bool,
    pub deviation_total: i128,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplierRecord {
    pub supplier: u32,
    /// Corrected balance per trading period.
    pub balance: Vec<i128>,
    pub scap: i128,
    pub reported_scap: i128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingLedger {
    pub schema: u32,
    pub scenario_seed: u64,
    pub approach: Approach,
    pub engine: EngineKind,
    pub faults: Vec<Fault>,
    pub users: Vec<UserRecord>,
    pub suppliers: Vec<SupplierRecord>,
    pub settlement_sum: i128,
    pub audit: AuditOutcome,
    pub failures: Vec<Failure>,
}

impl BillingLedger {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// `(user, BL)` pairs.
    pub fn bills(&self) -> BTreeMap<u32, i128> {
        self.users.iter().map(|u| (u.user, u.bl)).collect()
    }
}

/// Operation counts per entity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub meter_commits: u64,
    pub user_commits: u64,
    pub supplier_homo_adds: u64,
    pub supplier_opens: u64,
    /// Encrypted vectors, not calls.
    pub left_encrypts: u64,
    pub right_encrypts: u64,
    pub zero_tests: u64,
    /// `(supplier, period, zero tests)`.
    pub zero_tests_by_supplier: Vec<(u32, usize, u64)>,
}

/// Wall-clock time per entity kind and per step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub by_party: BTreeMap<PartyKind, Duration>,
    pub by_step: BTreeMap<Step, Duration>,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ledger: BillingLedger,
    pub stats: EngineStats,
    pub transcript: Transcript,
    pub ops: OpCounts,
    pub timings: Timings,
}
