//! Recycler intake: a statistical stand-in for the vision classifier, and the
//! refurbish / material-recovery split that follows it.
//!
//! The classifier is a confusion matrix `C[i][j] = P(predicted j | true i)`.
//! By default the diagonal holds the measured per-category recall and the
//! remaining mass of each row is spread evenly over the other categories.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{keys, CustodyEvent, EventDraft, EventKind, LedgerCluster, LedgerError, TimeWindow};
use crate::model::{
    mg_to_kg, ActorId, CategoryTable, DeviceCategory, DeviceId, DeviceRegistry, GeoPoint, ModelError, Stage,
};

/// Per-category recall of the reference classifier.
pub const MEASURED_RECALL: CategoryTable<f64> =
    CategoryTable { smartphone: 0.955, laptop_tablet: 0.955, battery: 0.902, circuit_board: 0.964 };

pub const DEFAULT_P_FUNCTIONAL: f64 = 0.30;
pub const DEFAULT_DONATE_SHARE: f64 = 0.5;
pub const DEFAULT_THROUGHPUT_PER_HOUR: f64 = 1000.0;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SortingError {
    #[error("confusion matrix row {row} ({category}): {reason}")]
    InvalidRow { row: usize, category: DeviceCategory, reason: String },
    #[error("p_func for {category} must be in [0, 1], got {value}")]
    InvalidProbability { category: DeviceCategory, value: f64 },
    #[error("donate_share must be in [0, 1], got {0}")]
    InvalidDonateShare(f64),
    #[error("device {device} is {stage}, expected AtRecycler")]
    NotAtRecycler { device: DeviceId, stage: Stage },
    #[error("device {0} was already classified")]
    AlreadyClassified(DeviceId),
    #[error("device {0} has not been classified")]
    NotClassified(DeviceId),
    #[error("device {0} was already routed")]
    AlreadyRouted(DeviceId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Row-stochastic 4×4 confusion matrix plus per-category functional probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfusionModel", into = "RawConfusionModel")]
pub struct ConfusionModel {
    matrix: [[f64; 4]; 4],
    p_func: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawConfusionModel {
    matrix: [[f64; 4]; 4],
    p_func: [f64; 4],
}

impl TryFrom<RawConfusionModel> for ConfusionModel {
    type Error = SortingError;

    fn try_from(raw: RawConfusionModel) -> Result<Self, Self::Error> {
        ConfusionModel::new(raw.matrix, raw.p_func)
    }
}

impl From<ConfusionModel> for RawConfusionModel {
    fn from(m: ConfusionModel) -> Self {
        RawConfusionModel { matrix: m.matrix, p_func: m.p_func }
    }
}

impl Default for ConfusionModel {
    fn default() -> Self {
        ConfusionModel::uniform_spread(MEASURED_RECALL, [DEFAULT_P_FUNCTIONAL; 4])
            .expect("measured recalls form a valid model")
    }
}

impl ConfusionModel {
    pub fn new(matrix: [[f64; 4]; 4], p_func: [f64; 4]) -> Result<Self, SortingError> {
        for (row, values) in matrix.iter().enumerate() {
            let category = DeviceCategory::ALL[row];
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SortingError::InvalidRow { row, category, reason: format!("entry {v} outside [0, 1]") });
            }
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(SortingError::InvalidRow { row, category, reason: format!("sums to {sum}, not 1") });
            }
        }
        for (i, p) in p_func.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(SortingError::InvalidProbability { category: DeviceCategory::ALL[i], value: *p });
            }
        }
        Ok(ConfusionModel { matrix, p_func })
    }

    /// Diagonal from `recall`, off-diagonal `(1 - recall) / 3`.
    pub fn uniform_spread(recall: CategoryTable<f64>, p_func: [f64; 4]) -> Result<Self, SortingError> {
        let r = recall.to_array();
        let mut matrix = [[0.0; 4]; 4];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = if i == j { r[i] } else { (1.0 - r[i]) / 3.0 };
            }
        }
        Self::new(matrix, p_func)
    }

    pub fn identity(p_func: [f64; 4]) -> Self {
        let mut matrix = [[0.0; 4]; 4];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        ConfusionModel { matrix, p_func }
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.matrix
    }

    pub fn entry(&self, truth: DeviceCategory, predicted: DeviceCategory) -> f64 {
        self.matrix[truth.index()][predicted.index()]
    }

    pub fn recall(&self, category: DeviceCategory) -> f64 {
        self.entry(category, category)
    }

    pub fn p_functional(&self, category: DeviceCategory) -> f64 {
        self.p_func[category.index()]
    }

    /// `P(true j | predicted j)` under the given class priors.
    pub fn precision(&self, category: DeviceCategory, priors: [f64; 4]) -> f64 {
        let j = category.index();
        let predicted_j: f64 = (0..4).map(|i| priors[i] * self.matrix[i][j]).sum();
        if predicted_j == 0.0 {
            return 0.0;
        }
        priors[j] * self.matrix[j][j] / predicted_j
    }

    /// Draws a predicted category from the row of `truth`. Always one draw.
    pub fn sample_predicted(&self, truth: DeviceCategory, rng: &mut impl Rng) -> DeviceCategory {
        let u: f64 = rng.gen();
        let row = &self.matrix[truth.index()];
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return DeviceCategory::ALL[j];
            }
        }
        // rounding left u above the final cumulative sum
        let last = row.iter().rposition(|p| *p > 0.0).unwrap_or(truth.index());
        DeviceCategory::ALL[last]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    RefurbishLine,
    MaterialRecovery,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::RefurbishLine => "refurbish_line",
            Disposition::MaterialRecovery => "material_recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub device_id: DeviceId,
    pub true_category: DeviceCategory,
    pub predicted_category: DeviceCategory,
    pub functional: bool,
    pub disposition: Disposition,
    /// Chain position of the ClassificationResult event.
    pub event_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Refurbished,
    Donated,
    Recovered,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Refurbished => "refurbished",
            Outcome::Donated => "donated",
            Outcome::Recovered => "recovered",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            Outcome::Refurbished => Stage::Refurbished,
            Outcome::Donated => Stage::Donated,
            Outcome::Recovered => Stage::MaterialRecovered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routed {
    pub outcome: Outcome,
    pub event: CustodyEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub received: u64,
    pub classified: u64,
    pub misclassified: u64,
    pub refurbished: u64,
    pub donated: u64,
    pub recovered: u64,
}

/// One recycler facility with its own intake queue and ledger identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingStation {
    pub operator: ActorId,
    pub location: GeoPoint,
    pub model: ConfusionModel,
    pub donate_share: f64,
    records: BTreeMap<DeviceId, ClassificationRecord>,
    routed: BTreeSet<DeviceId>,
    pub tallies: Tallies,
}

impl SortingStation {
    pub fn new(
        operator: ActorId,
        location: GeoPoint,
        model: ConfusionModel,
        donate_share: f64,
    ) -> Result<Self, SortingError> {
        if !(0.0..=1.0).contains(&donate_share) {
            return Err(SortingError::InvalidDonateShare(donate_share));
        }
        Ok(SortingStation {
            operator,
            location,
            model,
            donate_share,
            records: BTreeMap::new(),
            routed: BTreeSet::new(),
            tallies: Tallies::default(),
        })
    }

    pub fn record(&self, device: &DeviceId) -> Option<&ClassificationRecord> {
        self.records.get(device)
    }

    /// Logs a truck unloading at this station as one `TruckToRecycler` batch
    /// event and moves the devices to `AtRecycler`.
    pub fn receive_batch(
        &mut self,
        registry: &mut DeviceRegistry,
        ledger: &mut LedgerCluster,
        batch_id: &str,
        truck_id: &str,
        devices: &[DeviceId],
        timestamp: u64,
    ) -> Result<CustodyEvent, SortingError> {
        let mut mass_mg = 0u64;
        for d in devices {
            let rec = registry.get(d).ok_or_else(|| ModelError::UnknownDevice(d.clone()))?;
            if rec.stage != Stage::InTransit {
                return Err(ModelError::IllegalTransition { from: rec.stage, to: Stage::AtRecycler }.into());
            }
            mass_mg += rec.mass_mg();
        }
        let members = devices.iter().map(DeviceId::as_str).collect::<Vec<_>>().join(",");
        let draft = EventDraft::new(
            EventKind::TruckToRecycler,
            batch_id,
            self.location.clone(),
            timestamp,
            mg_to_kg(mass_mg),
            self.operator.clone(),
        )
        .with(keys::TRUCK, truck_id)
        .with(keys::MEMBERS, members);
        let event = ledger.append(draft)?;
        for d in devices {
            registry.advance_stage(d, Stage::AtRecycler)?;
        }
        self.tallies.received += devices.len() as u64;
        Ok(event)
    }

    /// Samples a prediction and a functional status, then appends the
    /// `ClassificationResult` event. Consumes exactly two draws from `rng`.
    pub fn classify(
        &mut self,
        registry: &mut DeviceRegistry,
        ledger: &mut LedgerCluster,
        device_id: &DeviceId,
        rng: &mut impl Rng,
        timestamp: u64,
    ) -> Result<ClassificationRecord, SortingError> {
        let device = registry.get(device_id).ok_or_else(|| ModelError::UnknownDevice(device_id.clone()))?.clone();
        if self.records.contains_key(device_id) {
            return Err(SortingError::AlreadyClassified(device_id.clone()));
        }
        if device.stage != Stage::AtRecycler {
            return Err(SortingError::NotAtRecycler { device: device.device_id, stage: device.stage });
        }
        let predicted = self.model.sample_predicted(device.category, rng);
        let functional = rng.gen::<f64>() < self.model.p_functional(device.category);
        let disposition = if functional { Disposition::RefurbishLine } else { Disposition::MaterialRecovery };

        let mut draft = EventDraft::new(
            EventKind::ClassificationResult,
            device_id.as_str(),
            self.location.clone(),
            timestamp,
            device.mass_kg,
            self.operator.clone(),
        )
        .with(keys::CATEGORY, device.category)
        .with(keys::PREDICTED, predicted)
        .with(keys::FUNCTIONAL, functional)
        .with(keys::DISPOSITION, disposition.as_str());
        if let Some(region) = &device.region {
            draft = draft.with(keys::REGION, region);
        }
        let event = ledger.append(draft)?;
        registry.set_functional(device_id, functional)?;

        let record = ClassificationRecord {
            device_id: device_id.clone(),
            true_category: device.category,
            predicted_category: predicted,
            functional,
            disposition,
            event_seq: event.seq,
        };
        self.records.insert(device_id.clone(), record.clone());
        self.tallies.classified += 1;
        if predicted != device.category {
            self.tallies.misclassified += 1;
        }
        Ok(record)
    }

    /// Sends a classified device down its line. Functional devices are donated
    /// with probability `donate_share`, otherwise refurbished; the rest go to
    /// material recovery with producer attribution. Consumes exactly one draw.
    pub fn route_disposition(
        &mut self,
        registry: &mut DeviceRegistry,
        ledger: &mut LedgerCluster,
        device_id: &DeviceId,
        rng: &mut impl Rng,
        timestamp: u64,
    ) -> Result<Routed, SortingError> {
        if self.routed.contains(device_id) {
            return Err(SortingError::AlreadyRouted(device_id.clone()));
        }
        let record = self.records.get(device_id).ok_or_else(|| SortingError::NotClassified(device_id.clone()))?;
        let device = registry.get(device_id).ok_or_else(|| ModelError::UnknownDevice(device_id.clone()))?.clone();
        let donate = rng.gen::<f64>() < self.donate_share;
        let outcome = match (record.disposition, donate) {
            (Disposition::MaterialRecovery, _) => Outcome::Recovered,
            (Disposition::RefurbishLine, true) => Outcome::Donated,
            (Disposition::RefurbishLine, false) => Outcome::Refurbished,
        };
        let kind = match outcome {
            Outcome::Recovered => EventKind::MaterialRecovered,
            Outcome::Refurbished | Outcome::Donated => EventKind::Refurbished,
        };
        let mut draft = EventDraft::new(
            kind,
            device_id.as_str(),
            self.location.clone(),
            timestamp,
            device.mass_kg,
            self.operator.clone(),
        )
        .with(keys::CATEGORY, device.category)
        .with(keys::OUTCOME, outcome.as_str());
        if let Some(p) = &device.producer {
            draft = draft.with(keys::PRODUCER, p);
        }
        if let Some(region) = &device.region {
            draft = draft.with(keys::REGION, region);
        }
        let event = ledger.append(draft)?;
        registry.advance_stage(device_id, outcome.stage())?;
        self.routed.insert(device_id.clone());
        match outcome {
            Outcome::Refurbished => self.tallies.refurbished += 1,
            Outcome::Donated => self.tallies.donated += 1,
            Outcome::Recovered => self.tallies.recovered += 1,
        }
        Ok(Routed { outcome, event })
    }
}

/// ClassificationResult events per simulated hour inside `window`.
pub fn station_throughput<E: AsRef<CustodyEvent>>(events: &[E], window: TimeWindow) -> f64 {
    let hours = window.duration_secs() as f64 / 3600.0;
    if hours == 0.0 {
        return 0.0;
    }
    let n = events
        .iter()
        .map(AsRef::as_ref)
        .filter(|e| e.event_kind == EventKind::ClassificationResult && window.contains(e.timestamp))
        .count();
    n as f64 / hours
}
