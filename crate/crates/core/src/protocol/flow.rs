//! Transcript checks: who may see what.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::party::{PartyId, PartyKind};
use super::payload::Datum;
use super::transcript::Transcript;
use super::Approach;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowViolation {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub datum: Datum,
}

impl std::fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{} {} -> {} carries {:?}", self.seq, self.from, self.to, self.datum)
    }
}

fn allowed(kind: PartyKind, datum: Datum, approach: Approach) -> bool {
    use Datum::*;
    match kind {
        PartyKind::Supplier => match datum {
            ClearReading | ClearBid | ClearRole | MaskKeys | IpeKey => false,
            ClearDeviation => approach == Approach::Disclosed,
            ChargeShare => approach == Approach::ServerCompare,
            _ => true,
        },
        PartyKind::Server => matches!(datum, DeviationShare | RoleShare),
        PartyKind::KeyAuthority => matches!(datum, ZoneTotals | ChargeFlags),
        PartyKind::Lemo => matches!(datum, BidCiphertext | BidCommitment | MaskedRole),
        PartyKind::SmartMeter => matches!(datum, MaskKeys | IpeKey | CommitOpening),
        PartyKind::User | PartyKind::Dso => true,
    }
}

/// Every message whose content the receiver is not allowed to learn.
pub fn check_information_flow(transcript: &Transcript, approach: Approach) -> Vec<FlowViolation> {
    let mut out = Vec::new();
    for e in &transcript.entries {
        for &datum in &e.carries {
            if !allowed(e.to.kind, datum, approach) {
                out.push(FlowViolation { seq: e.seq, from: e.from, to: e.to, datum });
            }
        }
    }
    out
}

/// Checks that each period's zone totals went to exactly every supplier,
/// every user and the key authority. Returns the offending periods.
pub fn check_publication_reach(transcript: &Transcript, users: u32, suppliers: u32, periods: usize) -> Vec<usize> {
    let mut expected: BTreeSet<PartyId> = (0..users).map(PartyId::user).collect();
    expected.extend((0..suppliers).map(PartyId::supplier));
    expected.insert(PartyId::ka());
    (0..periods)
        .filter(|&k| {
            let got: Vec<PartyId> = transcript
                .filter(|e| e.period == Some(k) && e.carries.contains(&Datum::ZoneTotals))
                .map(|e| e.to)
                .collect();
            let set: BTreeSet<PartyId> = got.iter().copied().collect();
            set != expected || got.len() != expected.len()
        })
        .collect()
}
