use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::{CustodyEvent, Digest};
use super::verify::{verify_chain, Verification, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicaOwner {
    Government,
    Producer,
    Ngo,
}

impl fmt::Display for ReplicaOwner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Injectable fault layer between the commit point and a replica.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicaLink {
    pub offline: bool,
    /// Number of upcoming prepare requests whose acknowledgement is lost.
    pub drop_acks: u32,
}

impl ReplicaLink {
    pub fn is_healthy(&self) -> bool {
        !self.offline && self.drop_acks == 0
    }
}

/// One stakeholder's copy of the chain. Events are shared between replicas
/// until a replica is mutated (copy on write), so tampering stays local.
#[derive(Debug, Clone)]
pub struct LedgerReplica {
    replica_id: String,
    owner: ReplicaOwner,
    chain: Vec<Arc<CustodyEvent>>,
    head: Digest,
    pub(crate) link: ReplicaLink,
}

impl LedgerReplica {
    pub fn new(replica_id: impl Into<String>, owner: ReplicaOwner) -> Self {
        LedgerReplica {
            replica_id: replica_id.into(),
            owner,
            chain: Vec::new(),
            head: Digest::GENESIS,
            link: ReplicaLink::default(),
        }
    }

    /// Builds a replica holding `events`, with the head taken from the last event.
    pub fn from_events(replica_id: impl Into<String>, owner: ReplicaOwner, events: Vec<CustodyEvent>) -> Self {
        let mut r = LedgerReplica::new(replica_id, owner);
        r.head = events.last().map(|e| e.this_hash).unwrap_or(Digest::GENESIS);
        r.chain = events.into_iter().map(Arc::new).collect();
        r
    }

    pub fn replica_id(&self) -> &str {
        &self.replica_id
    }

    pub fn owner(&self) -> ReplicaOwner {
        self.owner
    }

    pub fn head(&self) -> Digest {
        self.head
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn events(&self) -> &[Arc<CustodyEvent>] {
        &self.chain
    }

    pub fn link(&self) -> &ReplicaLink {
        &self.link
    }

    /// Whether this replica would accept `event` as its next entry.
    pub(crate) fn accepts(&self, event: &CustodyEvent) -> bool {
        event.seq == self.chain.len() as u64 && event.prev_hash == self.head
    }

    pub(crate) fn push(&mut self, event: Arc<CustodyEvent>) {
        self.head = event.this_hash;
        self.chain.push(event);
    }

    /// Local integrity check, including the recorded head.
    pub fn verify(&self) -> Verification {
        match verify_chain(&self.chain) {
            Verification::Ok { head, length } if head != self.head => Verification::Broken {
                first_bad_seq: length.saturating_sub(1),
                violation: Violation::StoredHeadMismatch,
            },
            other => other,
        }
    }

    /// Mutable access to a stored event, for fault and tamper injection.
    /// The stored head is left untouched.
    pub fn tamper(&mut self, seq: usize) -> Option<&mut CustodyEvent> {
        self.chain.get_mut(seq).map(Arc::make_mut)
    }

    /// Drops events from `len` onward and moves the head back accordingly,
    /// leaving a locally consistent but shorter chain.
    pub fn truncate(&mut self, len: usize) {
        self.chain.truncate(len);
        self.head = self.chain.last().map(|e| e.this_hash).unwrap_or(Digest::GENESIS);
    }

    pub fn to_events(&self) -> Vec<CustodyEvent> {
        self.chain.iter().map(|e| (**e).clone()).collect()
    }
}
