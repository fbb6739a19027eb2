use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::{CustodyEvent, Digest};
use super::replica::LedgerReplica;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    SeqMismatch {
        expected: u64,
        found: u64,
    },
    PrevHashMismatch,
    HashMismatch,
    TimestampRegression {
        previous: u64,
        found: u64,
    },
    /// The chain verifies but the replica's recorded head is not its last hash.
    StoredHeadMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verification {
    Ok { length: u64, head: Digest },
    Broken { first_bad_seq: u64, violation: Violation },
}

impl Verification {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verification::Ok { .. })
    }

    pub fn first_bad_seq(&self) -> Option<u64> {
        match self {
            Verification::Ok { .. } => None,
            Verification::Broken { first_bad_seq, .. } => Some(*first_bad_seq),
        }
    }
}

/// Recomputes every link from genesis and reports the earliest broken index.
pub fn verify_chain<E: AsRef<CustodyEvent>>(events: &[E]) -> Verification {
    let mut expected_prev = Digest::GENESIS;
    let mut last_ts = 0u64;
    for (i, event) in events.iter().enumerate() {
        let event = event.as_ref();
        let index = i as u64;
        let broken = |violation| Verification::Broken { first_bad_seq: index, violation };
        if event.seq != index {
            return broken(Violation::SeqMismatch { expected: index, found: event.seq });
        }
        if event.prev_hash != expected_prev {
            return broken(Violation::PrevHashMismatch);
        }
        if event.compute_hash() != event.this_hash {
            return broken(Violation::HashMismatch);
        }
        if i > 0 && event.timestamp < last_ts {
            return broken(Violation::TimestampRegression { previous: last_ts, found: event.timestamp });
        }
        last_ts = event.timestamp;
        expected_prev = event.this_hash;
    }
    Verification::Ok { length: events.len() as u64, head: expected_prev }
}

impl AsRef<CustodyEvent> for CustodyEvent {
    fn as_ref(&self) -> &CustodyEvent {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedReplica {
    pub replica_id: String,
    pub first_divergent_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `None` when no head is held by a strict majority.
    pub majority_head: Option<Digest>,
    pub majority_length: Option<u64>,
    pub agreeing: Vec<String>,
    pub flagged: Vec<FlaggedReplica>,
}

impl AuditReport {
    pub fn no_quorum_head(&self) -> bool {
        self.majority_head.is_none()
    }

    pub fn all_agree(&self) -> bool {
        self.majority_head.is_some() && self.flagged.is_empty()
    }

    pub fn flagged_at(&self, replica_id: &str) -> Option<u64> {
        self.flagged.iter().find(|f| f.replica_id == replica_id).map(|f| f.first_divergent_seq)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cross audit needs at least two replicas, got {0}")]
pub struct TooFewReplicas(pub usize);

fn first_divergence(a: &[Arc<CustodyEvent>], b: &[Arc<CustodyEvent>]) -> u64 {
    let common = a.len().min(b.len());
    (0..common).find(|&i| a[i].this_hash != b[i].this_hash || a[i] != b[i]).unwrap_or(common) as u64
}

/// Compares replicas against each other.
///
/// Each replica is first verified locally; one that fails is flagged at its
/// own first bad index. The rest are grouped by (stored head, length). A group
/// holding a strict majority of all replicas defines the reference chain, and
/// every other replica is flagged at the first index where it departs from it.
pub fn cross_audit(replicas: &[LedgerReplica]) -> Result<AuditReport, TooFewReplicas> {
    if replicas.len() < 2 {
        return Err(TooFewReplicas(replicas.len()));
    }
    let mut locally_bad: BTreeMap<usize, u64> = BTreeMap::new();
    let mut groups: BTreeMap<(Digest, u64), Vec<usize>> = BTreeMap::new();
    for (i, r) in replicas.iter().enumerate() {
        match r.verify() {
            Verification::Ok { .. } => groups.entry((r.head(), r.len() as u64)).or_default().push(i),
            Verification::Broken { first_bad_seq, .. } => {
                locally_bad.insert(i, first_bad_seq);
            }
        }
    }
    let majority = groups
        .iter()
        .find(|(_, members)| members.len() * 2 > replicas.len())
        .map(|(key, members)| (*key, members.clone()));

    let Some(((head, length), members)) = majority else {
        return Ok(AuditReport {
            majority_head: None,
            majority_length: None,
            agreeing: Vec::new(),
            flagged: Vec::new(),
        });
    };
    let reference = replicas[members[0]].events();
    let mut flagged = Vec::new();
    for (i, r) in replicas.iter().enumerate() {
        if members.contains(&i) {
            continue;
        }
        let divergence = first_divergence(r.events(), reference);
        let at = match locally_bad.get(&i) {
            Some(&bad) => bad.min(divergence),
            None => divergence,
        };
        flagged.push(FlaggedReplica { replica_id: r.replica_id().to_string(), first_divergent_seq: at });
    }
    Ok(AuditReport {
        majority_head: Some(head),
        majority_length: Some(length),
        agreeing: members.iter().map(|&i| replicas[i].replica_id().to_string()).collect(),
        flagged,
    })
}
