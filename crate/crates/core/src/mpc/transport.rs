use std::collections::VecDeque;

use serde::Serialize;

use super::{MpcError, PARTIES};

/// Counters for one phase of an engine run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhaseStats {
    /// `bytes[from][to]`.
    pub bytes: [[u64; PARTIES]; PARTIES],
    pub messages: u64,
    pub rounds: u64,
    /// Every multiplication gate, including those inside comparisons.
    pub mul_gates: u64,
}

impl PhaseStats {
    pub fn total_bytes(&self) -> u64 {
        self.bytes.iter().flatten().sum()
    }

    pub fn bytes_sent_by(&self, party: usize) -> u64 {
        self.bytes[party].iter().sum()
    }
}

/// Engine accounting. Offline work is the input-independent generation of
/// random bits for comparisons.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    pub online: PhaseStats,
    pub offline: PhaseStats,
    /// Multiplications requested directly by algorithms.
    pub multiplications: u64,
    pub comparisons: u64,
    pub openings: u64,
}

impl EngineStats {
    /// Flat `(name, value)` record of online counters.
    pub fn flat_record(&self) -> Vec<(String, u64)> {
        let mut out = vec![];
        for from in 0..PARTIES {
            for to in 0..PARTIES {
                if from != to {
                    out.push((format!("bytes_cs{from}_cs{to}"), self.online.bytes[from][to]));
                }
            }
        }
        out.push(("rounds".into(), self.online.rounds));
        out.push(("mul_gates".into(), self.online.mul_gates));
        out.push(("multiplications".into(), self.multiplications));
        out.push(("comparisons".into(), self.comparisons));
        out.push(("openings".into(), self.openings));
        out.push(("offline_bytes".into(), self.offline.total_bytes()));
        out.push(("offline_mul_gates".into(), self.offline.mul_gates));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Online,
    Offline,
}

/// In-process message queues between the three servers.
#[derive(Debug)]
pub struct Transport {
    queues: Vec<VecDeque<Vec<u8>>>,
    phase: Phase,
}

impl Default for Transport {
    fn default() -> Self {
        Self {
            queues: vec![VecDeque::new(); PARTIES * PARTIES],
            phase: Phase::Online,
        }
    }
}

impl Transport {
    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn send(&mut self, stats: &mut EngineStats, from: usize, to: usize, msg: Vec<u8>) {
        let ph = match self.phase {
            Phase::Online => &mut stats.online,
            Phase::Offline => &mut stats.offline,
        };
        ph.bytes[from][to] += msg.len() as u64;
        ph.messages += 1;
        self.queues[from * PARTIES + to].push_back(msg);
    }

    pub fn recv(&mut self, from: usize, to: usize) -> Result<Vec<u8>, MpcError> {
        self.queues[from * PARTIES + to]
            .pop_front()
            .ok_or(MpcError::Transport { from, to })
    }

    pub fn end_round(&mut self, stats: &mut EngineStats) {
        match self.phase {
            Phase::Online => stats.online.rounds += 1,
            Phase::Offline => stats.offline.rounds += 1,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }
}
