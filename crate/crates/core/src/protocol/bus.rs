//! In-process message bus with per-receiver queues, byte accounting, and a
//! running digest of every message for replay checks.

use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Server,
    Client(u16),
}

impl Party {
    fn slot(self) -> usize {
        match self {
            Party::Server => 0,
            Party::Client(i) => i as usize + 1,
        }
    }

    pub fn client(i: usize) -> Self {
        Party::Client(u16::try_from(i).expect("client index fits u16"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    MaskedVector,
    InputShares,
    ShareSum,
    SumResult,
}

/// Protocol 3 rounds as seen by the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    R1,
    R2,
    R3,
    R4,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub phase: Phase,
    pub kind: MessageKind,
    pub from: Party,
    pub to: Party,
    pub bytes: usize,
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: Party,
    pub kind: MessageKind,
    pub bytes: Vec<u8>,
}

/// Wall-clock time one party spent in each step, accumulated serially.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub setup: Duration,
    pub mask: Duration,
    pub share: Duration,
    pub share_sum: Duration,
    pub collect: Duration,
    pub reconstruct: Duration,
    pub unmask: Duration,
}

impl PhaseTimes {
    /// Everything except `setup` (public-matrix expansion).
    pub fn protocol_total(&self) -> Duration {
        self.mask + self.share + self.share_sum + self.collect + self.reconstruct + self.unmask
    }
}

pub struct Bus {
    inboxes: Vec<VecDeque<Envelope>>,
    records: Vec<MessageRecord>,
    hasher: Sha256,
}

impl Bus {
    pub fn new(k: usize) -> Self {
        Bus {
            inboxes: (0..=k).map(|_| VecDeque::new()).collect(),
            records: Vec::new(),
            hasher: Sha256::new(),
        }
    }

    pub fn send(
        &mut self,
        phase: Phase,
        kind: MessageKind,
        from: Party,
        to: Party,
        bytes: Vec<u8>,
    ) {
        self.records.push(MessageRecord {
            phase,
            kind,
            from,
            to,
            bytes: bytes.len(),
        });
        let tag = |p: Party| match p {
            Party::Server => u32::MAX,
            Party::Client(i) => i as u32,
        };
        self.hasher.update(tag(from).to_le_bytes());
        self.hasher.update(tag(to).to_le_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        self.inboxes[to.slot()].push_back(Envelope { from, kind, bytes });
    }

    /// Removes and returns everything queued for `to`, in send order.
    pub fn deliver(&mut self, to: Party) -> Vec<Envelope> {
        self.inboxes[to.slot()].drain(..).collect()
    }

    pub fn finish(self, k: usize, timings: Timings) -> Transcript {
        Transcript {
            k,
            records: self.records,
            digest: self.hasher.finalize().into(),
            timings,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub clients: Vec<PhaseTimes>,
    pub server: PhaseTimes,
}

impl Timings {
    pub fn new(k: usize) -> Self {
        Timings {
            clients: vec![PhaseTimes::default(); k],
            server: PhaseTimes::default(),
        }
    }
}

/// Every message of a run (sizes only) plus a digest over the bytes.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub k: usize,
    pub records: Vec<MessageRecord>,
    pub digest: [u8; 32],
    pub timings: Timings,
}

impl Transcript {
    pub fn client_sent(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for r in &self.records {
            if let Party::Client(i) = r.from {
                out[i as usize] += r.bytes;
            }
        }
        out
    }

    pub fn server_sent(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.from == Party::Server)
            .map(|r| r.bytes)
            .sum()
    }

    pub fn server_received(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.to == Party::Server)
            .map(|r| r.bytes)
            .sum()
    }

    pub fn bytes_of(&self, kind: MessageKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.bytes)
            .sum()
    }

    /// Message log and digest agree; timings are ignored.
    pub fn same_messages(&self, other: &Transcript) -> bool {
        self.digest == other.digest && self.records == other.records
    }
}
