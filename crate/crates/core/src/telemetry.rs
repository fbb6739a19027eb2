//! Smart-bin sensors, the lossy uplink they report over, and server-side
//! ingestion with per-bin deduplication and threshold alerts.
//!
//! The physical bin ([`SmartBin`]) is the ground truth for mass and contents.
//! The server only learns about it through [`TelemetryMessage`]s, which may be
//! lost, duplicated, or delayed; [`TelemetryHub`] keeps the resulting view.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{keys, CustodyEvent, EventDraft, EventKind, LedgerCluster, LedgerError};
use crate::model::{mg_to_kg, ActorId, BinId, DeviceId, DeviceRegistry, GeoPoint, ModelError, Stage};

pub const DEFAULT_THRESHOLD: f64 = 0.80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("unknown bin {0}")]
    UnknownBin(BinId),
    #[error("device {device} is {stage}, only Registered devices can be deposited")]
    NotDepositable { device: DeviceId, stage: Stage },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Wire record sent by a bin sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryMessage {
    pub bin_id: BinId,
    pub seq: u64,
    pub fill_fraction: f64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestOutcome {
    Accepted,
    Duplicate,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupRequest {
    pub bin_id: BinId,
    pub location: GeoPoint,
    pub estimated_kg: f64,
}

/// Physical collection point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartBin {
    pub bin_id: BinId,
    pub location: GeoPoint,
    pub capacity_kg: f64,
    /// Deposited devices in arrival order, with their mass in milligrams.
    contents: VecDeque<(DeviceId, u64)>,
    current_mg: u64,
    sensor_seq: u64,
    pickups: u64,
    pub overflow_incidents: u64,
}

impl SmartBin {
    pub fn new(bin_id: BinId, location: GeoPoint, capacity_kg: f64) -> Self {
        SmartBin {
            bin_id,
            location,
            capacity_kg,
            contents: VecDeque::new(),
            current_mg: 0,
            sensor_seq: 0,
            pickups: 0,
            overflow_incidents: 0,
        }
    }

    pub fn current_kg(&self) -> f64 {
        mg_to_kg(self.current_mg)
    }

    pub fn current_mg(&self) -> u64 {
        self.current_mg
    }

    pub fn fill_fraction(&self) -> f64 {
        self.current_kg() / self.capacity_kg
    }

    pub fn is_overflowing(&self) -> bool {
        self.current_kg() > self.capacity_kg
    }

    pub fn contents(&self) -> impl Iterator<Item = &DeviceId> {
        self.contents.iter().map(|(d, _)| d)
    }

    pub fn sensor_seq(&self) -> u64 {
        self.sensor_seq
    }

    /// Reads the sensor and produces the next message in the bin's sequence.
    pub fn report(&mut self, timestamp: u64) -> TelemetryMessage {
        self.sensor_seq += 1;
        TelemetryMessage {
            bin_id: self.bin_id.clone(),
            seq: self.sensor_seq,
            fill_fraction: self.fill_fraction(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deposit {
    pub event: CustodyEvent,
    pub message: TelemetryMessage,
    pub overflowed: bool,
}

/// Places a registered device in a bin: ledger first, then stage, then bin.
pub fn deposit_into_bin(
    bin: &mut SmartBin,
    registry: &mut DeviceRegistry,
    device_id: &DeviceId,
    citizen: &ActorId,
    operator: &ActorId,
    ledger: &mut LedgerCluster,
    timestamp: u64,
) -> Result<Deposit, TelemetryError> {
    let device = registry.get(device_id).ok_or_else(|| ModelError::UnknownDevice(device_id.clone()))?.clone();
    if device.stage != Stage::Registered {
        return Err(TelemetryError::NotDepositable { device: device.device_id, stage: device.stage });
    }
    let mut draft = EventDraft::new(
        EventKind::Deposit,
        device.device_id.as_str(),
        bin.location.clone(),
        timestamp,
        device.mass_kg,
        operator.clone(),
    )
    .with(keys::BIN, &bin.bin_id)
    .with(keys::CITIZEN, citizen)
    .with(keys::CATEGORY, device.category)
    .with(keys::REGION, &bin.location.region);
    if let Some(p) = &device.producer {
        draft = draft.with(keys::PRODUCER, p);
    }
    let event = ledger.append(draft)?;
    registry.advance_stage(device_id, Stage::Deposited)?;
    registry.set_region(device_id, bin.location.region.clone())?;

    let mass = device.mass_mg();
    bin.contents.push_back((device.device_id, mass));
    bin.current_mg += mass;
    let overflowed = bin.is_overflowing();
    if overflowed {
        bin.overflow_incidents += 1;
    }
    let message = bin.report(timestamp);
    Ok(Deposit { event, message, overflowed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub collected_kg: f64,
    pub collected_mg: u64,
    pub devices: Vec<DeviceId>,
    pub event: CustodyEvent,
    /// Mass left behind when the truck could not take everything.
    pub remaining_kg: f64,
}

/// Transfers a bin's contents to a truck, oldest deposits first, up to
/// `max_kg` when the truck is nearly full. Appends one `BinToTruck` batch
/// event (even for an empty visit), moves the devices to `InTransit`, and
/// resets the server view of the bin.
#[allow(clippy::too_many_arguments)]
pub fn empty_bin(
    bin: &mut SmartBin,
    hub: &mut TelemetryHub,
    registry: &mut DeviceRegistry,
    ledger: &mut LedgerCluster,
    truck_id: &str,
    collector: &ActorId,
    timestamp: u64,
    max_kg: Option<f64>,
) -> Result<Collection, TelemetryError> {
    if !hub.bins.contains_key(&bin.bin_id) {
        return Err(TelemetryError::UnknownBin(bin.bin_id.clone()));
    }
    let limit_mg = max_kg.map(crate::model::kg_to_mg).unwrap_or(u64::MAX);
    let mut take = 0usize;
    let mut taken_mg = 0u64;
    for (_, mg) in &bin.contents {
        if taken_mg + mg > limit_mg {
            break;
        }
        taken_mg += mg;
        take += 1;
    }
    let devices: Vec<DeviceId> = bin.contents.iter().take(take).map(|(d, _)| d.clone()).collect();
    let members = devices.iter().map(DeviceId::as_str).collect::<Vec<_>>().join(",");
    let draft = EventDraft::new(
        EventKind::BinToTruck,
        format!("{}/pickup-{}", bin.bin_id, bin.pickups),
        bin.location.clone(),
        timestamp,
        mg_to_kg(taken_mg),
        collector.clone(),
    )
    .with(keys::BIN, &bin.bin_id)
    .with(keys::TRUCK, truck_id)
    .with(keys::MEMBERS, members)
    .with(keys::REGION, &bin.location.region);
    let event = ledger.append(draft)?;
    bin.pickups += 1;
    for d in &devices {
        registry.advance_stage(d, Stage::InTransit)?;
    }
    bin.contents.drain(..take);
    bin.current_mg -= taken_mg;
    hub.reset_after_collection(&bin.bin_id, bin.fill_fraction(), bin.sensor_seq)?;
    Ok(Collection {
        collected_kg: mg_to_kg(taken_mg),
        collected_mg: taken_mg,
        devices,
        event,
        remaining_kg: bin.current_kg(),
    })
}

/// Server-side view of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinState {
    pub bin_id: BinId,
    pub location: GeoPoint,
    pub capacity_kg: f64,
    pub current_kg: f64,
    pub fill_fraction: f64,
    pub alert_active: bool,
    pub last_report_seq: u64,
    pub last_report_time: u64,
    seen: BTreeSet<u64>,
}

impl BinState {
    pub fn new(bin_id: BinId, location: GeoPoint, capacity_kg: f64) -> Self {
        BinState {
            bin_id,
            location,
            capacity_kg,
            current_kg: 0.0,
            fill_fraction: 0.0,
            alert_active: false,
            last_report_seq: 0,
            last_report_time: 0,
            seen: BTreeSet::new(),
        }
    }

    pub fn is_overflowing(&self) -> bool {
        self.current_kg > self.capacity_kg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryHub {
    pub threshold: f64,
    bins: BTreeMap<BinId, BinState>,
    pickup_queue: VecDeque<PickupRequest>,
    pub alerts_raised: u64,
}

impl TelemetryHub {
    pub fn new(threshold: f64) -> Self {
        TelemetryHub { threshold, bins: BTreeMap::new(), pickup_queue: VecDeque::new(), alerts_raised: 0 }
    }

    pub fn register_bin(&mut self, bin: &SmartBin) {
        self.bins.insert(bin.bin_id.clone(), BinState::new(bin.bin_id.clone(), bin.location.clone(), bin.capacity_kg));
    }

    pub fn bin(&self, id: &BinId) -> Option<&BinState> {
        self.bins.get(id)
    }

    pub fn bins(&self) -> impl Iterator<Item = &BinState> {
        self.bins.values()
    }

    /// Applies a message under a per-bin high-water mark on `seq`.
    pub fn ingest(&mut self, msg: &TelemetryMessage) -> Result<IngestOutcome, TelemetryError> {
        let threshold = self.threshold;
        let state = self.bins.get_mut(&msg.bin_id).ok_or_else(|| TelemetryError::UnknownBin(msg.bin_id.clone()))?;
        if state.seen.contains(&msg.seq) {
            return Ok(IngestOutcome::Duplicate);
        }
        if msg.seq <= state.last_report_seq {
            return Ok(IngestOutcome::Stale);
        }
        state.seen.insert(msg.seq);
        state.last_report_seq = msg.seq;
        state.last_report_time = msg.timestamp;
        state.fill_fraction = msg.fill_fraction;
        state.current_kg = msg.fill_fraction * state.capacity_kg;
        if msg.fill_fraction >= threshold && !state.alert_active {
            self.raise_alert(&msg.bin_id)?;
        }
        Ok(IngestOutcome::Accepted)
    }

    /// Activates the alert and queues one pickup request. A no-op while the
    /// alert is already active or the bin is below threshold.
    pub fn raise_alert(&mut self, bin_id: &BinId) -> Result<Option<PickupRequest>, TelemetryError> {
        let state = self.bins.get_mut(bin_id).ok_or_else(|| TelemetryError::UnknownBin(bin_id.clone()))?;
        if state.alert_active || state.fill_fraction < self.threshold {
            return Ok(None);
        }
        state.alert_active = true;
        let request = PickupRequest {
            bin_id: state.bin_id.clone(),
            location: state.location.clone(),
            estimated_kg: state.current_kg,
        };
        self.pickup_queue.push_back(request.clone());
        self.alerts_raised += 1;
        Ok(Some(request))
    }

    /// A collection is observed directly, so the view jumps to the post-pickup
    /// fill and any in-flight messages from before it become stale.
    fn reset_after_collection(
        &mut self,
        bin_id: &BinId,
        remaining_fill: f64,
        sensor_seq: u64,
    ) -> Result<(), TelemetryError> {
        let state = self.bins.get_mut(bin_id).ok_or_else(|| TelemetryError::UnknownBin(bin_id.clone()))?;
        state.alert_active = false;
        state.fill_fraction = remaining_fill;
        state.current_kg = remaining_fill * state.capacity_kg;
        state.last_report_seq = state.last_report_seq.max(sensor_seq);
        state.seen.retain(|s| *s > state.last_report_seq);
        self.pickup_queue.retain(|r| &r.bin_id != bin_id);
        self.raise_alert(bin_id)?;
        Ok(())
    }

    pub fn pending_requests(&self) -> impl Iterator<Item = &PickupRequest> {
        self.pickup_queue.iter()
    }

    /// Hands queued requests to the router, with mass estimates refreshed from
    /// the latest reports. Bins stay alerted until emptied.
    pub fn take_pickup_requests(&mut self) -> Vec<PickupRequest> {
        let mut out: Vec<PickupRequest> = self.pickup_queue.drain(..).collect();
        for r in &mut out {
            if let Some(state) = self.bins.get(&r.bin_id) {
                r.estimated_kg = state.current_kg;
            }
        }
        out
    }

    /// Requeues requests for alerted bins that were not visited.
    pub fn requeue(&mut self, requests: impl IntoIterator<Item = PickupRequest>) {
        for r in requests {
            if self.bins.get(&r.bin_id).is_some_and(|s| s.alert_active)
                && !self.pickup_queue.iter().any(|q| q.bin_id == r.bin_id)
            {
                self.pickup_queue.push_back(r);
            }
        }
    }
}

/// Loss, duplication, and delay parameters for the sensor uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub p_loss: f64,
    pub p_duplicate: f64,
    pub max_delay_s: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { p_loss: 0.0, p_duplicate: 0.0, max_delay_s: 0 }
    }
}

impl ChannelModel {
    pub fn perfect() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.p_loss) {
            return Err(format!("channel.p_loss must be in [0, 1), got {}", self.p_loss));
        }
        if !(0.0..=1.0).contains(&self.p_duplicate) {
            return Err(format!("channel.p_duplicate must be in [0, 1], got {}", self.p_duplicate));
        }
        Ok(())
    }
}

/// Seeded at-least-once-ish channel. Every `send` consumes the same number of
/// random draws, so the stream does not shift with outcomes.
#[derive(Debug, Clone)]
pub struct Channel {
    model: ChannelModel,
    rng: ChaCha8Rng,
    in_flight: BTreeMap<(u64, u64), TelemetryMessage>,
    order: u64,
    pub sent: u64,
    pub lost: u64,
    pub duplicated: u64,
}

impl Channel {
    pub fn new(model: ChannelModel, seed: u64) -> Self {
        Channel {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            in_flight: BTreeMap::new(),
            order: 0,
            sent: 0,
            lost: 0,
            duplicated: 0,
        }
    }

    fn enqueue(&mut self, at: u64, msg: TelemetryMessage) {
        self.in_flight.insert((at, self.order), msg);
        self.order += 1;
    }

    pub fn send(&mut self, msg: TelemetryMessage, now: u64) {
        self.sent += 1;
        let lose = self.rng.gen::<f64>() < self.model.p_loss;
        let dup = self.rng.gen::<f64>() < self.model.p_duplicate;
        let d1 = self.rng.gen_range(0..=self.model.max_delay_s);
        let d2 = self.rng.gen_range(0..=self.model.max_delay_s);
        if lose {
            self.lost += 1;
            return;
        }
        if dup {
            self.duplicated += 1;
            self.enqueue(now + d2, msg.clone());
        }
        self.enqueue(now + d1, msg);
    }

    pub fn next_delivery_time(&self) -> Option<u64> {
        self.in_flight.keys().next().map(|(t, _)| *t)
    }

    /// Removes and returns every message due at or before `now`, in delivery order.
    pub fn deliver_until(&mut self, now: u64) -> Vec<TelemetryMessage> {
        let later = self.in_flight.split_off(&(now + 1, 0));
        std::mem::replace(&mut self.in_flight, later).into_values().collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DeviceCategory;

    struct Fixture {
        bin: SmartBin,
        hub: TelemetryHub,
        registry: DeviceRegistry,
        ledger: LedgerCluster,
        citizen: ActorId,
        collector: ActorId,
    }

    fn fixture() -> Fixture {
        let bin = SmartBin::new(BinId::new("bin-1"), GeoPoint::new(1.0, 2.0, "north").unwrap(), 100.0);
        let mut hub = TelemetryHub::new(DEFAULT_THRESHOLD);
        hub.register_bin(&bin);
        let mut ledger = LedgerCluster::new(3).unwrap();
        let collector = ActorId::new("collector-1");
        ledger.register_recipient(collector.clone());
        Fixture { bin, hub, registry: DeviceRegistry::new(), ledger, citizen: ActorId::new("citizen-1"), collector }
    }

    impl Fixture {
        fn deposit(&mut self, kg: f64, ts: u64) -> Deposit {
            let d = self.registry.register_device(DeviceCategory::LaptopTablet, kg).unwrap();
            deposit_into_bin(
                &mut self.bin,
                &mut self.registry,
                &d.device_id,
                &self.citizen,
                &self.collector,
                &mut self.ledger,
                ts,
            )
            .unwrap()
        }
    }

    #[test]
    fn deposit_arithmetic() {
        let mut f = fixture();
        let dep = f.deposit(2.0, 10);
        assert_eq!(dep.message.fill_fraction, 0.02);
        assert_eq!(dep.event.event_kind, EventKind::Deposit);
        assert_eq!(dep.event.weight_kg, 2.0);
        assert_eq!(f.registry.get(&DeviceId::new(dep.event.device_id.clone())).unwrap().stage, Stage::Deposited);
        assert!(!dep.overflowed);
    }

    #[test]
    fn deposit_crossing_threshold_raises_alert() {
        let mut f = fixture();
        f.deposit(79.0, 1);
        let m = f.deposit(2.0, 2).message;
        assert!((m.fill_fraction - 0.81).abs() < 1e-12);
        assert_eq!(f.hub.ingest(&m).unwrap(), IngestOutcome::Accepted);
        assert!(f.hub.bin(&f.bin.bin_id).unwrap().alert_active);
        assert_eq!(f.hub.pending_requests().count(), 1);
    }

    #[test]
    fn overflow_is_counted() {
        let mut f = fixture();
        f.deposit(99.0, 1);
        let dep = f.deposit(2.0, 2);
        assert!((dep.message.fill_fraction - 1.01).abs() < 1e-12);
        assert!(dep.overflowed);
        assert_eq!(f.bin.overflow_incidents, 1);
    }

    #[test]
    fn depositing_twice_is_rejected() {
        let mut f = fixture();
        let dep = f.deposit(1.0, 1);
        let id = DeviceId::new(dep.event.device_id);
        let err =
            deposit_into_bin(&mut f.bin, &mut f.registry, &id, &f.citizen, &f.collector, &mut f.ledger, 2).unwrap_err();
        assert!(matches!(err, TelemetryError::NotDepositable { stage: Stage::Deposited, .. }));
        assert_eq!(f.ledger.len(), 1);
    }

    fn msg(seq: u64, fill: f64) -> TelemetryMessage {
        TelemetryMessage { bin_id: BinId::new("bin-1"), seq, fill_fraction: fill, timestamp: seq }
    }

    #[test]
    fn ingest_dedup() {
        let mut f = fixture();
        assert_eq!(f.hub.ingest(&msg(1, 0.3)).unwrap(), IngestOutcome::Accepted);
        let before = f.hub.bin(&BinId::new("bin-1")).unwrap().clone();
        assert_eq!(f.hub.ingest(&msg(1, 0.3)).unwrap(), IngestOutcome::Duplicate);
        assert_eq!(f.hub.bin(&BinId::new("bin-1")).unwrap(), &before);
        assert_eq!(f.hub.ingest(&msg(3, 0.4)).unwrap(), IngestOutcome::Accepted);
        assert_eq!(f.hub.ingest(&msg(2, 0.35)).unwrap(), IngestOutcome::Stale);
        assert_eq!(f.hub.bin(&BinId::new("bin-1")).unwrap().fill_fraction, 0.4);
        let unknown = TelemetryMessage { bin_id: BinId::new("bin-9"), ..msg(1, 0.1) };
        assert_eq!(f.hub.ingest(&unknown), Err(TelemetryError::UnknownBin(BinId::new("bin-9"))));
    }

    #[test]
    fn alert_threshold_is_inclusive_and_idempotent() {
        let mut f = fixture();
        f.hub.ingest(&msg(1, 0.79)).unwrap();
        assert!(!f.hub.bin(&BinId::new("bin-1")).unwrap().alert_active);
        f.hub.ingest(&msg(2, 0.80)).unwrap();
        assert!(f.hub.bin(&BinId::new("bin-1")).unwrap().alert_active);
        f.hub.ingest(&msg(3, 0.85)).unwrap();
        f.hub.ingest(&msg(4, 0.85)).unwrap();
        assert_eq!(f.hub.pending_requests().count(), 1);
        assert_eq!(f.hub.raise_alert(&BinId::new("bin-1")).unwrap(), None);
    }

    #[test]
    fn emptying() {
        let mut f = fixture();
        for i in 0..17 {
            let m = f.deposit(5.0, i).message;
            f.hub.ingest(&m).unwrap();
        }
        assert_eq!(f.bin.current_kg(), 85.0);
        assert!(f.hub.bin(&f.bin.bin_id).unwrap().alert_active);
        let seq_before = f.bin.sensor_seq();
        let c = empty_bin(&mut f.bin, &mut f.hub, &mut f.registry, &mut f.ledger, "truck-0", &f.collector, 100, None)
            .unwrap();
        assert_eq!(c.collected_kg, 85.0);
        assert_eq!(c.devices.len(), 17);
        assert_eq!(f.bin.current_kg(), 0.0);
        assert!(!f.hub.bin(&f.bin.bin_id).unwrap().alert_active);
        assert!(c.devices.iter().all(|d| f.registry.get(d).unwrap().stage == Stage::InTransit));
        assert_eq!(c.event.payload_value(keys::TRUCK), Some("truck-0"));
        assert_eq!(c.event.members().count(), 17);

        // degenerate visit
        let c2 = empty_bin(&mut f.bin, &mut f.hub, &mut f.registry, &mut f.ledger, "truck-0", &f.collector, 101, None)
            .unwrap();
        assert_eq!(c2.collected_kg, 0.0);
        assert_eq!(c2.event.weight_kg, 0.0);
        assert_eq!(c2.event.event_kind, EventKind::BinToTruck);

        // the sensor counter carries on
        let next = f.deposit(1.0, 102).message;
        assert_eq!(next.seq, seq_before + 1);
        assert_eq!(f.hub.ingest(&next).unwrap(), IngestOutcome::Accepted);
    }

    #[test]
    fn partial_emptying_keeps_remainder() {
        let mut f = fixture();
        for i in 0..5 {
            f.deposit(2.0, i);
        }
        let c = empty_bin(&mut f.bin, &mut f.hub, &mut f.registry, &mut f.ledger, "t", &f.collector, 10, Some(5.0))
            .unwrap();
        assert_eq!(c.devices.len(), 2);
        assert_eq!(c.remaining_kg, 6.0);
        assert_eq!(f.bin.current_kg(), 6.0);
    }

    #[test]
    fn perfect_channel_is_exact_and_in_order() {
        let mut ch = Channel::new(ChannelModel::perfect(), 7);
        for s in 1..=50 {
            ch.send(msg(s, 0.01 * s as f64), s);
        }
        let got = ch.deliver_until(1000);
        assert_eq!(got, (1..=50).map(|s| msg(s, 0.01 * s as f64)).collect::<Vec<_>>());
    }

    #[test]
    fn delayed_messages_wait() {
        let model = ChannelModel { p_loss: 0.0, p_duplicate: 0.0, max_delay_s: 100 };
        let mut ch = Channel::new(model, 1);
        for s in 1..=20 {
            ch.send(msg(s, 0.1), 0);
        }
        let early = ch.deliver_until(50).len();
        let late = ch.deliver_until(100).len();
        assert_eq!(early + late, 20);
        assert_eq!(ch.in_flight(), 0);
    }
}
