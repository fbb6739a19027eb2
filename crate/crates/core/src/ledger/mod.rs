//! Replicated, hash-chained custody ledger.
//!
//! A single [`LedgerCluster`] is the commit point. An append is sealed
//! against the current head, offered to every replica, and committed only if
//! a strict majority acknowledges it; otherwise no replica keeps it.

mod canonical;
mod event;
pub mod file;
mod replica;
mod verify;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{kg_to_mg, mg_to_kg, ActorId};

pub use canonical::{canonical_bytes, event_hash};
pub use event::{keys, CustodyEvent, Digest, EventDraft, EventKind};
pub use replica::{LedgerReplica, ReplicaLink, ReplicaOwner};
pub use verify::{cross_audit, verify_chain, AuditReport, FlaggedReplica, TooFewReplicas, Verification, Violation};

pub const DEFAULT_REPLICAS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("quorum not reached: {acks} of {replicas} replicas acknowledged, {needed} needed")]
    QuorumFailure { acks: usize, replicas: usize, needed: usize },
    #[error("timestamp {found} precedes head timestamp {head}")]
    TimestampRegression { head: u64, found: u64 },
    #[error("weight must be finite and non-negative, got {0}")]
    InvalidWeight(f64),
    #[error("unknown recipient {0}")]
    UnknownRecipient(ActorId),
    #[error("invalid event location: {0}")]
    InvalidLocation(String),
    #[error("no event at seq {0}")]
    UnknownSeq(u64),
    #[error("a ledger needs at least one replica")]
    NoReplicas,
}

/// Half-open time window `[start, end)` in simulation seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u64,
    pub end: u64,
}

impl TimeWindow {
    pub fn new(start: u64, end: u64) -> Option<Self> {
        (start <= end).then_some(TimeWindow { start, end })
    }

    pub fn all() -> Self {
        TimeWindow { start: 0, end: u64::MAX }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration_secs(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone)]
pub struct LedgerCluster {
    chain: Vec<Arc<CustodyEvent>>,
    replicas: Vec<LedgerReplica>,
    recipients: BTreeSet<ActorId>,
}

const OWNER_ROTATION: [ReplicaOwner; 3] = [ReplicaOwner::Government, ReplicaOwner::Producer, ReplicaOwner::Ngo];

impl LedgerCluster {
    pub fn new(replica_count: usize) -> Result<Self, LedgerError> {
        if replica_count == 0 {
            return Err(LedgerError::NoReplicas);
        }
        let replicas = (0..replica_count)
            .map(|i| {
                let owner = OWNER_ROTATION[i % OWNER_ROTATION.len()];
                LedgerReplica::new(format!("replica-{i}-{}", owner.to_string().to_lowercase()), owner)
            })
            .collect();
        Ok(LedgerCluster { chain: Vec::new(), replicas, recipients: BTreeSet::new() })
    }

    /// Rebuilds a cluster whose replicas all hold `events`. The caller is
    /// expected to have verified them.
    pub fn from_events(replica_count: usize, events: Vec<CustodyEvent>) -> Result<Self, LedgerError> {
        let mut cluster = Self::new(replica_count)?;
        for event in events {
            let event = Arc::new(event);
            for r in &mut cluster.replicas {
                r.push(event.clone());
            }
            cluster.recipients.insert(event.recipient_id.clone());
            cluster.chain.push(event);
        }
        Ok(cluster)
    }

    pub fn register_recipient(&mut self, id: ActorId) {
        self.recipients.insert(id);
    }

    pub fn is_known_recipient(&self, id: &ActorId) -> bool {
        self.recipients.contains(id)
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn head(&self) -> Digest {
        self.chain.last().map(|e| e.this_hash).unwrap_or(Digest::GENESIS)
    }

    pub fn head_timestamp(&self) -> Option<u64> {
        self.chain.last().map(|e| e.timestamp)
    }

    pub fn events(&self) -> &[Arc<CustodyEvent>] {
        &self.chain
    }

    pub fn get(&self, seq: u64) -> Option<&CustodyEvent> {
        self.chain.get(seq as usize).map(|e| e.as_ref())
    }

    pub fn replicas(&self) -> &[LedgerReplica] {
        &self.replicas
    }

    pub fn replica_mut(&mut self, index: usize) -> Option<&mut LedgerReplica> {
        self.replicas.get_mut(index)
    }

    pub fn set_offline(&mut self, index: usize, offline: bool) {
        if let Some(r) = self.replicas.get_mut(index) {
            r.link.offline = offline;
        }
    }

    pub fn drop_next_acks(&mut self, index: usize, count: u32) {
        if let Some(r) = self.replicas.get_mut(index) {
            r.link.drop_acks = count;
        }
    }

    fn quorum(&self) -> usize {
        self.replicas.len() / 2 + 1
    }

    /// Ships committed events a reachable replica is missing. A replica whose
    /// chain is not a prefix of the committed chain is left alone.
    fn catch_up(chain: &[Arc<CustodyEvent>], replica: &mut LedgerReplica) {
        let have = replica.len();
        if have >= chain.len() {
            return;
        }
        let expected_head = if have == 0 { Digest::GENESIS } else { chain[have - 1].this_hash };
        if replica.head() != expected_head {
            return;
        }
        for e in &chain[have..] {
            replica.push(e.clone());
        }
    }

    /// Brings every online replica up to date with the committed chain.
    pub fn resync_online(&mut self) {
        for r in &mut self.replicas {
            if !r.link.offline {
                Self::catch_up(&self.chain, r);
            }
        }
    }

    pub fn append(&mut self, draft: EventDraft) -> Result<CustodyEvent, LedgerError> {
        if !draft.weight_kg.is_finite() || draft.weight_kg < 0.0 {
            return Err(LedgerError::InvalidWeight(draft.weight_kg));
        }
        if let Some(head_ts) = self.head_timestamp() {
            if draft.timestamp < head_ts {
                return Err(LedgerError::TimestampRegression { head: head_ts, found: draft.timestamp });
            }
        }
        if !self.recipients.contains(&draft.recipient_id) {
            return Err(LedgerError::UnknownRecipient(draft.recipient_id));
        }
        draft.location.validate().map_err(|e| LedgerError::InvalidLocation(e.to_string()))?;

        let event = Arc::new(CustodyEvent::seal(draft, self.chain.len() as u64, self.head()));

        // prepare
        let mut acked = Vec::with_capacity(self.replicas.len());
        for (i, r) in self.replicas.iter_mut().enumerate() {
            if r.link.offline {
                continue;
            }
            Self::catch_up(&self.chain, r);
            let accepts = r.accepts(&event);
            if r.link.drop_acks > 0 {
                r.link.drop_acks -= 1;
                continue;
            }
            if accepts {
                acked.push(i);
            }
        }
        let needed = self.quorum();
        if acked.len() < needed {
            return Err(LedgerError::QuorumFailure { acks: acked.len(), replicas: self.replicas.len(), needed });
        }

        // commit
        for i in acked {
            self.replicas[i].push(event.clone());
        }
        self.chain.push(event.clone());
        Ok((*event).clone())
    }

    pub fn verify(&self) -> Verification {
        verify_chain(&self.chain)
    }

    pub fn cross_audit(&self) -> Result<AuditReport, TooFewReplicas> {
        cross_audit(&self.replicas)
    }

    /// All events about `device_id`, directly or as a batch member, in chain order.
    pub fn trace_device(&self, device_id: &str) -> Vec<CustodyEvent> {
        trace_device(&self.chain, device_id)
    }

    pub fn producer_recycled_mass(&self, producer: &ActorId, window: TimeWindow) -> f64 {
        producer_recycled_mass(&self.chain, producer, window)
    }

    pub fn to_events(&self) -> Vec<CustodyEvent> {
        self.chain.iter().map(|e| (**e).clone()).collect()
    }
}

pub fn trace_device<E: AsRef<CustodyEvent>>(events: &[E], device_id: &str) -> Vec<CustodyEvent> {
    events.iter().map(AsRef::as_ref).filter(|e| e.concerns(device_id)).cloned().collect()
}

/// Recovered mass attributed to `producer` within `window`, summed in integer
/// milligrams so the result does not depend on summation order.
pub fn producer_recycled_mass<E: AsRef<CustodyEvent>>(events: &[E], producer: &ActorId, window: TimeWindow) -> f64 {
    let mg: u64 = events
        .iter()
        .map(AsRef::as_ref)
        .filter(|e| {
            e.event_kind == EventKind::MaterialRecovered
                && window.contains(e.timestamp)
                && e.payload_value(keys::PRODUCER) == Some(producer.as_str())
        })
        .map(|e| kg_to_mg(e.weight_kg))
        .sum();
    mg_to_kg(mg)
}
