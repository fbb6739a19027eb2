use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{ActorId, GeoPoint};

use super::canonical;

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const GENESIS: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Deposit,
    BinToTruck,
    TruckToRecycler,
    ClassificationResult,
    MaterialRecovered,
    Refurbished,
    CertificateIssued,
    PointsCredited,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Deposit,
        EventKind::BinToTruck,
        EventKind::TruckToRecycler,
        EventKind::ClassificationResult,
        EventKind::MaterialRecovered,
        EventKind::Refurbished,
        EventKind::CertificateIssued,
        EventKind::PointsCredited,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Deposit => "Deposit",
            EventKind::BinToTruck => "BinToTruck",
            EventKind::TruckToRecycler => "TruckToRecycler",
            EventKind::ClassificationResult => "ClassificationResult",
            EventKind::MaterialRecovered => "MaterialRecovered",
            EventKind::Refurbished => "Refurbished",
            EventKind::CertificateIssued => "CertificateIssued",
            EventKind::PointsCredited => "PointsCredited",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL.iter().copied().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

/// Well-known payload keys.
pub mod keys {
    pub const CITIZEN: &str = "citizen";
    pub const BIN: &str = "bin";
    pub const TRUCK: &str = "truck";
    pub const CATEGORY: &str = "category";
    pub const PRODUCER: &str = "producer";
    /// Comma-separated member device ids of a batch event.
    pub const MEMBERS: &str = "members";
    /// Region the device was collected in.
    pub const REGION: &str = "region";
    pub const DEPOSIT_SEQ: &str = "deposit_seq";
    pub const POINTS: &str = "points";
    pub const PREDICTED: &str = "predicted";
    pub const FUNCTIONAL: &str = "functional";
    pub const DISPOSITION: &str = "disposition";
    pub const OUTCOME: &str = "outcome";
    pub const YEAR: &str = "year";
    pub const RECOVERY_SEQ: &str = "recovery_seq";
}

/// Everything a caller supplies for an append; the ledger fills in position and hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDraft {
    /// Device tag, or a batch tag when `payload` carries `members`.
    pub device_id: String,
    pub location: GeoPoint,
    pub timestamp: u64,
    pub weight_kg: f64,
    pub recipient_id: ActorId,
    pub event_kind: EventKind,
    pub payload: BTreeMap<String, String>,
}

impl EventDraft {
    pub fn new(
        event_kind: EventKind,
        device_id: impl Into<String>,
        location: GeoPoint,
        timestamp: u64,
        weight_kg: f64,
        recipient_id: ActorId,
    ) -> Self {
        EventDraft {
            device_id: device_id.into(),
            location,
            timestamp,
            weight_kg,
            recipient_id,
            event_kind,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.payload.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustodyEvent {
    pub seq: u64,
    pub device_id: String,
    pub location: GeoPoint,
    pub timestamp: u64,
    pub weight_kg: f64,
    pub recipient_id: ActorId,
    pub event_kind: EventKind,
    pub payload: BTreeMap<String, String>,
    pub prev_hash: Digest,
    pub this_hash: Digest,
}

impl CustodyEvent {
    /// Seals a draft at position `seq` after `prev_hash`.
    pub fn seal(draft: EventDraft, seq: u64, prev_hash: Digest) -> Self {
        let mut event = CustodyEvent {
            seq,
            device_id: draft.device_id,
            location: draft.location,
            timestamp: draft.timestamp,
            weight_kg: draft.weight_kg,
            recipient_id: draft.recipient_id,
            event_kind: draft.event_kind,
            payload: draft.payload,
            prev_hash,
            this_hash: Digest::GENESIS,
        };
        event.this_hash = event.compute_hash();
        event
    }

    pub fn compute_hash(&self) -> Digest {
        canonical::event_hash(self)
    }

    pub fn payload_value(&self, key: &str) -> Option<&str> {
        self.payload.get(key).map(String::as_str)
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.payload_value(keys::MEMBERS).into_iter().flat_map(|m| m.split(',').filter(|s| !s.is_empty()))
    }

    /// True if the event is about `device_id`, directly or as a batch member.
    pub fn concerns(&self, device_id: &str) -> bool {
        self.device_id == device_id || self.members().any(|m| m == device_id)
    }
}
