//! Environmental impact of recovered material and the formal recycling-rate
//! projection.
//!
//! Aggregates are kept as integer totals (milligrams, unit counts, id sets) so
//! reports over disjoint windows merge exactly; the reported kg, litres and
//! grams are always derived from the totals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{keys, CustodyEvent, EventKind, TimeWindow};
use crate::model::{kg_to_mg, mg_to_kg, DeviceCategory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpactError {
    #[error("impact factor {name} must be positive, got {value}")]
    NonPositiveFactor { name: &'static str, value: f64 },
    #[error("projection year {0} is outside 0..=5")]
    YearOutOfRange(u32),
}

/// CO₂ for general e-waste is expressed as a reference pair (155 t avoided per
/// 110 t recycled) and applied as `mass * co2 / ewaste`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactFactors {
    pub co2_reference_t: f64,
    pub ewaste_reference_t: f64,
    pub co2_per_phone_kg: f64,
    pub water_per_phone_l: f64,
    pub gold_per_tonne_pcb_kg: f64,
}

impl Default for ImpactFactors {
    fn default() -> Self {
        ImpactFactors {
            co2_reference_t: 155.0,
            ewaste_reference_t: 110.0,
            co2_per_phone_kg: 1.5,
            water_per_phone_l: 20.0,
            gold_per_tonne_pcb_kg: 1.5,
        }
    }
}

impl ImpactFactors {
    pub fn validate(&self) -> Result<(), ImpactError> {
        let fields = [
            ("co2_reference_t", self.co2_reference_t),
            ("ewaste_reference_t", self.ewaste_reference_t),
            ("co2_per_phone_kg", self.co2_per_phone_kg),
            ("water_per_phone_l", self.water_per_phone_l),
            ("gold_per_tonne_pcb_kg", self.gold_per_tonne_pcb_kg),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(ImpactError::NonPositiveFactor { name, value });
            }
        }
        Ok(())
    }

    /// Smartphones are counted per unit; all other recovered mass uses the
    /// mass factor, and circuit boards also yield gold.
    pub fn co2_kg(&self, non_phone_kg: f64, phones: u64) -> f64 {
        non_phone_kg * self.co2_reference_t / self.ewaste_reference_t + phones as f64 * self.co2_per_phone_kg
    }

    pub fn water_l(&self, phones: u64) -> f64 {
        phones as f64 * self.water_per_phone_l
    }

    /// kg of gold per tonne of boards is grams per kg.
    pub fn gold_g(&self, pcb_kg: f64) -> f64 {
        pcb_kg * self.gold_per_tonne_pcb_kg
    }
}

/// Exact, mergeable aggregates behind an [`ImpactReport`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactTotals {
    pub devices_collected: u64,
    pub deposited_mg: u64,
    pub recovered_mg: u64,
    pub recovered_non_phone_mg: u64,
    pub recovered_pcb_mg: u64,
    pub phones_recovered: u64,
    pub refurbished: u64,
    pub donated: u64,
    pub active_users: BTreeSet<String>,
    pub recovered_by_producer_mg: BTreeMap<String, u64>,
}

impl ImpactTotals {
    pub fn merge(&mut self, other: &ImpactTotals) {
        self.devices_collected += other.devices_collected;
        self.deposited_mg += other.deposited_mg;
        self.recovered_mg += other.recovered_mg;
        self.recovered_non_phone_mg += other.recovered_non_phone_mg;
        self.recovered_pcb_mg += other.recovered_pcb_mg;
        self.phones_recovered += other.phones_recovered;
        self.refurbished += other.refurbished;
        self.donated += other.donated;
        self.active_users.extend(other.active_users.iter().cloned());
        for (p, mg) in &other.recovered_by_producer_mg {
            *self.recovered_by_producer_mg.entry(p.clone()).or_default() += mg;
        }
    }

    fn add_event(&mut self, e: &CustodyEvent) {
        let category = e.payload_value(keys::CATEGORY).and_then(|c| c.parse::<DeviceCategory>().ok());
        match e.event_kind {
            EventKind::Deposit => {
                self.devices_collected += 1;
                self.deposited_mg += kg_to_mg(e.weight_kg);
                if let Some(c) = e.payload_value(keys::CITIZEN) {
                    self.active_users.insert(c.to_string());
                }
            }
            EventKind::MaterialRecovered => {
                let mg = kg_to_mg(e.weight_kg);
                self.recovered_mg += mg;
                match category {
                    Some(DeviceCategory::Smartphone) => self.phones_recovered += 1,
                    Some(DeviceCategory::CircuitBoard) => {
                        self.recovered_pcb_mg += mg;
                        self.recovered_non_phone_mg += mg;
                    }
                    _ => self.recovered_non_phone_mg += mg,
                }
                if let Some(p) = e.payload_value(keys::PRODUCER) {
                    *self.recovered_by_producer_mg.entry(p.to_string()).or_default() += mg;
                }
            }
            EventKind::Refurbished => match e.payload_value(keys::OUTCOME) {
                Some("donated") => self.donated += 1,
                _ => self.refurbished += 1,
            },
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub window: TimeWindow,
    pub region: Option<String>,
    pub totals: ImpactTotals,
    pub devices_collected: u64,
    pub mass_recycled_kg: f64,
    pub active_users: u64,
    pub co2_avoided_kg: f64,
    pub water_saved_l: f64,
    pub gold_recovered_g: f64,
    pub recovered_by_producer_kg: BTreeMap<String, f64>,
}

impl ImpactReport {
    pub fn from_totals(
        totals: ImpactTotals,
        factors: &ImpactFactors,
        window: TimeWindow,
        region: Option<String>,
    ) -> Self {
        ImpactReport {
            window,
            region,
            devices_collected: totals.devices_collected,
            mass_recycled_kg: mg_to_kg(totals.recovered_mg),
            active_users: totals.active_users.len() as u64,
            co2_avoided_kg: factors.co2_kg(mg_to_kg(totals.recovered_non_phone_mg), totals.phones_recovered),
            water_saved_l: factors.water_l(totals.phones_recovered),
            gold_recovered_g: factors.gold_g(mg_to_kg(totals.recovered_pcb_mg)),
            recovered_by_producer_kg: totals
                .recovered_by_producer_mg
                .iter()
                .map(|(p, mg)| (p.clone(), mg_to_kg(*mg)))
                .collect(),
            totals,
        }
    }

    /// Report over the union of two disjoint windows. `window` becomes the
    /// smallest window covering both.
    pub fn merge(&self, other: &ImpactReport, factors: &ImpactFactors) -> ImpactReport {
        let mut totals = self.totals.clone();
        totals.merge(&other.totals);
        let window =
            TimeWindow { start: self.window.start.min(other.window.start), end: self.window.end.max(other.window.end) };
        ImpactReport::from_totals(totals, factors, window, self.region.clone())
    }

    /// Recovered share of each producer's put-on-market mass.
    pub fn epr_attainment(&self, put_on_market_kg: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        put_on_market_kg
            .iter()
            .filter(|(_, pom)| **pom > 0.0)
            .map(|(p, pom)| {
                let recovered = self.recovered_by_producer_kg.get(p).copied().unwrap_or(0.0);
                (p.clone(), recovered / pom)
            })
            .collect()
    }
}

/// Aggregates impact over the events in `window`, optionally for one region.
pub fn compute_impact<E: AsRef<CustodyEvent>>(
    events: &[E],
    window: TimeWindow,
    region: Option<&str>,
    factors: &ImpactFactors,
) -> ImpactReport {
    let mut totals = ImpactTotals::default();
    for e in events.iter().map(AsRef::as_ref) {
        if !window.contains(e.timestamp) {
            continue;
        }
        if let Some(r) = region {
            if e.payload_value(keys::REGION) != Some(r) {
                continue;
            }
        }
        totals.add_event(e);
    }
    ImpactReport::from_totals(totals, factors, window, region.map(str::to_string))
}

pub const PROJECTION_START_PCT: f64 = 43.0;
pub const PROJECTION_END_PCT: f64 = 65.0;
pub const PROJECTION_YEARS: u32 = 5;

/// Formal recycling rate in percent, rising linearly over five years.
pub fn projection(year: u32) -> Result<f64, ImpactError> {
    if year > PROJECTION_YEARS {
        return Err(ImpactError::YearOutOfRange(year));
    }
    let span = PROJECTION_END_PCT - PROJECTION_START_PCT;
    Ok(PROJECTION_START_PCT + span * year as f64 / PROJECTION_YEARS as f64)
}
