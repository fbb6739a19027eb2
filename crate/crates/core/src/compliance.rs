//! Producer take-back obligations: the target schedule, compliance checks,
//! and certificates issued automatically from confirmed recoveries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{keys, CustodyEvent, EventDraft, EventKind, LedgerCluster, LedgerError, TimeWindow};
use crate::model::{kg_to_mg, mg_to_kg, ActorId};

pub const SECONDS_PER_YEAR: u64 = 365 * 86_400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplianceError {
    #[error("compliance year {0} is outside 1..=5")]
    UnknownYear(u32),
    #[error("targets must be in [0, 1] and non-decreasing, got {0:?}")]
    InvalidSchedule([f64; 5]),
    #[error("no ledger event at seq {0}")]
    UnknownEvent(u64),
    #[error("ledger event {seq} is {kind}, not MaterialRecovered")]
    NotARecovery { seq: u64, kind: EventKind },
    #[error("put-on-market mass must be non-negative, got {0}")]
    InvalidMass(f64),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Recycling target per compliance year, years 1 to 5 (2023-24 to 2027-28).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct EprSchedule {
    targets: [f64; 5],
}

impl Default for EprSchedule {
    fn default() -> Self {
        EprSchedule { targets: [0.60, 0.65, 0.70, 0.75, 0.80] }
    }
}

impl TryFrom<[f64; 5]> for EprSchedule {
    type Error = ComplianceError;

    fn try_from(targets: [f64; 5]) -> Result<Self, Self::Error> {
        EprSchedule::new(targets)
    }
}

impl From<EprSchedule> for [f64; 5] {
    fn from(s: EprSchedule) -> Self {
        s.targets
    }
}

impl EprSchedule {
    pub fn new(targets: [f64; 5]) -> Result<Self, ComplianceError> {
        let in_range = targets.iter().all(|t| (0.0..=1.0).contains(t));
        let monotone = targets.windows(2).all(|w| w[0] <= w[1]);
        if !in_range || !monotone {
            return Err(ComplianceError::InvalidSchedule(targets));
        }
        Ok(EprSchedule { targets })
    }

    pub fn target(&self, year: u32) -> Result<f64, ComplianceError> {
        match year {
            1..=5 => Ok(self.targets[year as usize - 1]),
            _ => Err(ComplianceError::UnknownYear(year)),
        }
    }

    /// `"2023-24"` for year 1.
    pub fn label(year: u32) -> String {
        let start = 2022 + year;
        format!("{start}-{:02}", (start + 1) % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComplianceStatus {
    Compliant { ratio: f64, target: f64 },
    Shortfall { ratio: f64, target: f64, shortfall_kg: f64 },
    NotApplicable,
}

impl ComplianceStatus {
    pub fn is_compliant(&self) -> bool {
        matches!(self, ComplianceStatus::Compliant { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerObligation {
    pub producer: ActorId,
    pub put_on_market_kg: BTreeMap<u32, f64>,
    /// Credited recovered mass per year, in milligrams.
    pub recycled_mg: BTreeMap<u32, u64>,
    /// Year -> chain seq of the CertificateIssued event.
    pub certificates: BTreeMap<u32, u64>,
}

impl ProducerObligation {
    pub fn new(producer: ActorId) -> Self {
        ProducerObligation {
            producer,
            put_on_market_kg: BTreeMap::new(),
            recycled_mg: BTreeMap::new(),
            certificates: BTreeMap::new(),
        }
    }

    pub fn recycled_kg(&self, year: u32) -> f64 {
        mg_to_kg(self.recycled_mg.get(&year).copied().unwrap_or(0))
    }
}

/// Compares the recycled share for `year` against the schedule.
pub fn check_compliance(
    obligation: &ProducerObligation,
    year: u32,
    schedule: &EprSchedule,
) -> Result<ComplianceStatus, ComplianceError> {
    let target = schedule.target(year)?;
    let pom = obligation.put_on_market_kg.get(&year).copied().unwrap_or(0.0);
    if pom <= 0.0 {
        return Ok(ComplianceStatus::NotApplicable);
    }
    let recycled = obligation.recycled_kg(year);
    let ratio = recycled / pom;
    if ratio >= target {
        Ok(ComplianceStatus::Compliant { ratio, target })
    } else {
        Ok(ComplianceStatus::Shortfall { ratio, target, shortfall_kg: target * pom - recycled })
    }
}

/// Credits recoveries to producers and issues at most one certificate per
/// (producer, year), on the recovery that first meets the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceTracker {
    pub schedule: EprSchedule,
    /// Compliance year that simulation time 0 falls in.
    pub start_year: u32,
    pub year_secs: u64,
    pub issuer: ActorId,
    obligations: BTreeMap<ActorId, ProducerObligation>,
    processed: BTreeSet<u64>,
}

impl ComplianceTracker {
    pub fn new(schedule: EprSchedule, start_year: u32, issuer: ActorId) -> Self {
        ComplianceTracker {
            schedule,
            start_year,
            year_secs: SECONDS_PER_YEAR,
            issuer,
            obligations: BTreeMap::new(),
            processed: BTreeSet::new(),
        }
    }

    pub fn year_of(&self, timestamp: u64) -> u32 {
        self.start_year + (timestamp / self.year_secs) as u32
    }

    /// Simulation-time window covering compliance `year`.
    pub fn year_window(&self, year: u32) -> Option<TimeWindow> {
        let offset = year.checked_sub(self.start_year)? as u64;
        TimeWindow::new(offset * self.year_secs, (offset + 1) * self.year_secs)
    }

    pub fn set_put_on_market(&mut self, producer: &ActorId, year: u32, kg: f64) -> Result<(), ComplianceError> {
        if !kg.is_finite() || kg < 0.0 {
            return Err(ComplianceError::InvalidMass(kg));
        }
        self.schedule.target(year)?;
        self.obligation_mut(producer).put_on_market_kg.insert(year, kg);
        Ok(())
    }

    pub fn obligation(&self, producer: &ActorId) -> Option<&ProducerObligation> {
        self.obligations.get(producer)
    }

    pub fn obligations(&self) -> impl Iterator<Item = &ProducerObligation> {
        self.obligations.values()
    }

    pub fn check(&self, producer: &ActorId, year: u32) -> Result<ComplianceStatus, ComplianceError> {
        match self.obligations.get(producer) {
            Some(o) => check_compliance(o, year, &self.schedule),
            None => {
                self.schedule.target(year)?;
                Ok(ComplianceStatus::NotApplicable)
            }
        }
    }

    fn obligation_mut(&mut self, producer: &ActorId) -> &mut ProducerObligation {
        self.obligations.entry(producer.clone()).or_insert_with(|| ProducerObligation::new(producer.clone()))
    }

    /// Processes the MaterialRecovered event at `recovery_seq`. Replays are
    /// ignored. Returns the CertificateIssued event when one is appended.
    pub fn auto_issue_certificate(
        &mut self,
        ledger: &mut LedgerCluster,
        recovery_seq: u64,
        timestamp: u64,
    ) -> Result<Option<CustodyEvent>, ComplianceError> {
        let event = ledger.get(recovery_seq).ok_or(ComplianceError::UnknownEvent(recovery_seq))?.clone();
        if event.event_kind != EventKind::MaterialRecovered {
            return Err(ComplianceError::NotARecovery { seq: recovery_seq, kind: event.event_kind });
        }
        if self.processed.contains(&recovery_seq) {
            return Ok(None);
        }
        let Some(producer) = event.payload_value(keys::PRODUCER).map(ActorId::new) else {
            self.processed.insert(recovery_seq);
            return Ok(None);
        };
        let year = self.year_of(event.timestamp);
        // work on a copy so a failed certificate append leaves no trace
        let mut updated =
            self.obligations.get(&producer).cloned().unwrap_or_else(|| ProducerObligation::new(producer.clone()));
        *updated.recycled_mg.entry(year).or_default() += kg_to_mg(event.weight_kg);
        let crossed = !updated.certificates.contains_key(&year)
            && matches!(check_compliance(&updated, year, &self.schedule), Ok(ComplianceStatus::Compliant { .. }));
        let mut issued = None;
        if crossed {
            let draft = EventDraft::new(
                EventKind::CertificateIssued,
                format!("epr/{producer}/{year}"),
                event.location.clone(),
                timestamp,
                updated.recycled_kg(year),
                producer.clone(),
            )
            .with(keys::PRODUCER, &producer)
            .with(keys::YEAR, year)
            .with(keys::RECOVERY_SEQ, recovery_seq);
            let cert = ledger.append(draft)?;
            updated.certificates.insert(year, cert.seq);
            issued = Some(cert);
        }
        self.obligations.insert(producer, updated);
        self.processed.insert(recovery_seq);
        Ok(issued)
    }
}
