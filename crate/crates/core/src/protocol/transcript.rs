//! Message log and in-process delivery.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::party::{PartyId, PartyKind};
use super::payload::{Datum, Payload};
use super::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Setup,
    Bid,
    Input,
    Compute,
    Bills,
    Verify,
    Settle,
}

impl Step {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Setup => "setup",
            Self::Bid => "bid",
            Self::Input => "input",
            Self::Compute => "compute",
            Self::Bills => "bills",
            Self::Verify => "verify",
            Self::Settle => "settle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub step: Step,
    pub period: Option<usize>,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: String,
    pub bytes: usize,
    pub model_bits: u64,
    pub carries: Vec<Datum>,
    /// Hex SHA-256 of the encoded payload.
    pub hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub faults: Vec<Fault>,
    pub entries: Vec<TranscriptEntry>,
}

pub const TRANSCRIPT_HEADER: &str = "# seq\tstep\tperiod\tfrom\tto\tkind\tbytes\tmodel_bits\tsha256";

impl Transcript {
    /// Line-delimited export: optional `# fault` lines, a header, then one
    /// tab-separated line per message. Period is `-` outside trading periods.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for f in &self.faults {
            let _ = writeln!(out, "# fault {}", serde_json::to_string(f).unwrap_or_default());
        }
        out.push_str(TRANSCRIPT_HEADER);
        out.push('\n');
        for e in &self.entries {
            let period = e.period.map_or("-".to_string(), |k| k.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.seq,
                e.step.label(),
                period,
                e.from,
                e.to,
                e.kind,
                e.bytes,
                e.model_bits,
                e.hash
            );
        }
        out
    }

    /// Total bytes and model bits per (sender kind, receiver kind).
    pub fn totals_by_kind(&self) -> BTreeMap<(PartyKind, PartyKind), (u64, u64)> {
        let mut m: BTreeMap<(PartyKind, PartyKind), (u64, u64)> = BTreeMap::new();
        for e in &self.entries {
            let slot = m.entry((e.from.kind, e.to.kind)).or_default();
            slot.0 += e.bytes as u64;
            slot.1 += e.model_bits;
        }
        m
    }

    pub fn filter<'a>(&'a self, pred: impl Fn(&TranscriptEntry) -> bool + 'a) -> impl Iterator<Item = &'a TranscriptEntry> + 'a {
        self.entries.iter().filter(move |e| pred(e))
    }
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: PartyId,
    pub period: Option<usize>,
    pub payload: Payload,
}

/// Ordered per-receiver queues; every send is logged.
#[derive(Debug, Default)]
pub struct Network {
    transcript: Transcript,
    inboxes: BTreeMap<PartyId, VecDeque<Envelope>>,
}

impl Network {
    pub fn new(faults: Vec<Fault>) -> Self {
        Self {
            transcript: Transcript { faults, entries: vec![] },
            inboxes: BTreeMap::new(),
        }
    }

    pub fn send(&mut self, step: Step, period: Option<usize>, from: PartyId, to: PartyId, payload: Payload) {
        let encoded = payload.encode();
        let entry = TranscriptEntry {
            seq: self.transcript.entries.len() as u64,
            step,
            period,
            from,
            to,
            kind: payload.name().to_string(),
            bytes: encoded.len(),
            model_bits: payload.model_bits(encoded.len()),
            carries: payload.carries().to_vec(),
            hash: hex::encode(Sha256::digest(&encoded)),
        };
        self.transcript.entries.push(entry);
        self.inboxes.entry(to).or_default().push_back(Envelope { from, period, payload });
    }

    /// Everything queued for `to`, in arrival order.
    pub fn drain(&mut self, to: PartyId) -> Vec<Envelope> {
        self.inboxes.remove(&to).map(Vec::from).unwrap_or_default()
    }

    pub fn pending(&self) -> usize {
        self.inboxes.values().map(|q| q.len()).sum()
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
