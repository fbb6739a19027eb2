//! Platform state: every subsystem wired to one ledger, plus the handful of
//! operations that move devices between them. The simulation drives these
//! operations from its event loop; the API service calls the same ones.

use std::collections::VecDeque;
use std::io;
use std::path::Path;

use greengrid_core::compliance::ComplianceTracker;
use greengrid_core::ledger::{file as ledger_file, CustodyEvent, LedgerCluster, LedgerError};
use greengrid_core::model::{
    kg_to_mg, mg_to_kg, Actor, ActorDirectory, ActorId, BinId, DeviceCategory, DeviceId, DeviceRegistry, GeoPoint,
    ModelError, RegionId, Role, Stage,
};
use greengrid_core::rewards::{ledger_credited_points, Receipt, RewardsEngine, RewardsError};
use greengrid_core::routing::{baseline_routes, plan_routes, Fleet, RoutePlan, RoutingError};
use greengrid_core::sorting::{Outcome, SortingError, SortingStation};
use greengrid_core::telemetry::{
    deposit_into_bin, empty_bin, Channel, IngestOutcome, PickupRequest, SmartBin, TelemetryError, TelemetryHub,
    TelemetryMessage,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};
use crate::streams;

pub const OPERATOR_ID: &str = "bin-operator";
pub const RECYCLER_ID: &str = "recycler-1";
pub const REGULATOR_ID: &str = "regulator-1";
pub const DEPOT_REGION: &str = "depot";
pub const LEDGER_FILE: &str = "ledger.ndjson";
pub const WORLD_FILE: &str = "world.json";

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Sorting(#[from] SortingError),
    #[error(transparent)]
    Rewards(#[from] RewardsError),
    #[error(transparent)]
    Compliance(#[from] greengrid_core::compliance::ComplianceError),
    #[error("unknown bin {0}")]
    UnknownBin(BinId),
    #[error("unknown citizen {0}")]
    UnknownCitizen(ActorId),
    #[error("unknown producer {0}")]
    UnknownProducer(ActorId),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citizen {
    pub id: ActorId,
    pub home_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truck {
    pub truck_id: String,
    pub crew: ActorId,
    pub cargo: Vec<DeviceId>,
    pub cargo_mg: u64,
    /// Simulation time at which the truck is back at the depot and free.
    pub available_at: u64,
    pub trips: u64,
}

/// Monotone tallies; daily figures are differences of two snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub generated: u64,
    pub deposits: u64,
    pub deposited_mg: u64,
    pub collected_mg: u64,
    pub unloaded_mg: u64,
    pub refurbished_mg: u64,
    pub donated_mg: u64,
    pub recovered_mg: u64,
    pub overflow_incidents: u64,
    pub points_credited: u64,
    pub certificates: u64,
    pub trips: u64,
    pub bin_visits: u64,
    pub optimized_km: f64,
    pub baseline_km: f64,
    pub messages_sent: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub stale: u64,
}

/// Everything except the ledger and the live channel; this is what a world
/// snapshot file holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldState {
    pub now: u64,
    pub registry: DeviceRegistry,
    pub actors: ActorDirectory,
    pub citizens: Vec<Citizen>,
    pub bins: Vec<SmartBin>,
    pub hub: TelemetryHub,
    pub trucks: Vec<Truck>,
    pub station: SortingStation,
    pub station_queue: VecDeque<DeviceId>,
    pub station_queue_mg: u64,
    pub rewards: RewardsEngine,
    pub compliance: ComplianceTracker,
    pub counters: Counters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub scenario: Scenario,
    pub state: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub category: DeviceCategory,
    /// Defaults to the category's typical mass.
    pub mass_kg: Option<f64>,
    pub producer: Option<ActorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositReceipt {
    pub device_id: DeviceId,
    pub bin_id: BinId,
    pub deposit_seq: u64,
    pub credit_seq: u64,
    pub points: u64,
    pub balance: u64,
    pub fill_fraction: f64,
    pub overflowed: bool,
}

/// A planned trip with its timetable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSchedule {
    pub truck: usize,
    pub trip_id: String,
    pub visits: Vec<(BinId, u64)>,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub plan: RoutePlan,
    pub baseline_km: f64,
    pub trips: Vec<TripSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processed {
    pub device_id: DeviceId,
    pub outcome: Outcome,
    pub certificate: Option<CustodyEvent>,
}

pub struct World {
    pub scenario: Scenario,
    pub state: WorldState,
    pub ledger: LedgerCluster,
    pub channel: Channel,
    sorting_rng: ChaCha8Rng,
}

/// Quadrant of the plane a point falls in.
pub fn region_of(x: f64, y: f64, plane_km: f64) -> String {
    let half = plane_km / 2.0;
    let ns = if y >= half { "north" } else { "south" };
    let ew = if x >= half { "east" } else { "west" };
    format!("{ns}-{ew}")
}

impl World {
    /// Lays out bins and citizens from the scenario's layout stream and
    /// registers every actor with the ledger.
    pub fn new(scenario: Scenario) -> Result<Self, WorldError> {
        scenario.validate()?;
        let seed = scenario.seed;
        let mut layout = streams::rng(seed, streams::LAYOUT);
        let plane = scenario.bins.plane_km;

        let bins: Vec<SmartBin> = (0..scenario.bins.count)
            .map(|i| {
                let (x, y) = (layout.gen_range(0.0..plane), layout.gen_range(0.0..plane));
                let loc = GeoPoint::new(x, y, region_of(x, y, plane))?;
                Ok(SmartBin::new(BinId::new(format!("bin-{i:03}")), loc, scenario.bins.capacity_kg))
            })
            .collect::<Result<_, ModelError>>()?;
        let citizens: Vec<Citizen> = (0..scenario.citizens.count)
            .map(|i| {
                let (x, y) = (layout.gen_range(0.0..plane), layout.gen_range(0.0..plane));
                let home = GeoPoint { x, y, region: RegionId::new("") };
                let home_bin = (0..bins.len())
                    .min_by(|a, b| {
                        home.distance_km(&bins[*a].location).total_cmp(&home.distance_km(&bins[*b].location))
                    })
                    .expect("at least one bin");
                Citizen { id: ActorId::new(format!("citizen-{i:05}")), home_bin }
            })
            .collect();

        let mut ledger = LedgerCluster::new(scenario.ledger.replicas)?;
        let mut actors = ActorDirectory::default();
        let mut add = |id: ActorId, role: Role, region: &str| -> Result<(), WorldError> {
            ledger.register_recipient(id.clone());
            actors.insert(Actor { actor_id: id, role, region: RegionId::new(region) })?;
            Ok(())
        };
        for c in &citizens {
            add(c.id.clone(), Role::Citizen, bins[c.home_bin].location.region.as_str())?;
        }
        add(ActorId::new(OPERATOR_ID), Role::Collector, DEPOT_REGION)?;
        add(ActorId::new(RECYCLER_ID), Role::Recycler, DEPOT_REGION)?;
        add(ActorId::new(REGULATOR_ID), Role::Regulator, DEPOT_REGION)?;
        let mut trucks = Vec::new();
        for t in 0..scenario.fleet.trucks {
            let crew = ActorId::new(format!("collector-{t}"));
            add(crew.clone(), Role::Collector, DEPOT_REGION)?;
            trucks.push(Truck {
                truck_id: format!("truck-{t}"),
                crew,
                cargo: Vec::new(),
                cargo_mg: 0,
                available_at: 0,
                trips: 0,
            });
        }
        let mut compliance = ComplianceTracker::new(
            scenario.compliance.targets,
            scenario.compliance.start_year,
            ActorId::new(REGULATOR_ID),
        );
        for p in &scenario.compliance.producers {
            let id = ActorId::new(p.id.clone());
            add(id.clone(), Role::Producer, DEPOT_REGION)?;
            compliance.set_put_on_market(&id, scenario.compliance.start_year, p.put_on_market_kg)?;
        }

        let mut hub = TelemetryHub::new(scenario.telemetry.threshold);
        for b in &bins {
            hub.register_bin(b);
        }
        let depot = GeoPoint::new(scenario.fleet.depot_x, scenario.fleet.depot_y, DEPOT_REGION)?;
        let station = SortingStation::new(
            ActorId::new(RECYCLER_ID),
            depot,
            scenario.sorting.model()?,
            scenario.sorting.donate_share,
        )?;
        let rewards = RewardsEngine::new(scenario.rewards.points, scenario.rewards.catalog.clone());
        let channel = Channel::new(scenario.telemetry.channel(), streams::seed(seed, streams::CHANNEL));
        let sorting_rng = streams::rng(seed, streams::SORTING);

        let state = WorldState {
            now: 0,
            registry: DeviceRegistry::new(),
            actors,
            citizens,
            bins,
            hub,
            trucks,
            station,
            station_queue: VecDeque::new(),
            station_queue_mg: 0,
            rewards,
            compliance,
            counters: Counters::default(),
        };
        Ok(World { scenario, state, ledger, channel, sorting_rng })
    }

    /// Rebuilds a world from a snapshot and its ledger. The ledger must verify
    /// and its head must not be later than the snapshot clock.
    pub fn restore(snapshot: WorldSnapshot, events: Vec<CustodyEvent>) -> Result<Self, WorldError> {
        let WorldSnapshot { scenario, state } = snapshot;
        scenario.validate()?;
        let mut ledger = LedgerCluster::from_events(scenario.ledger.replicas, events)?;
        if let Some(bad) = ledger.verify().first_bad_seq() {
            return Err(WorldError::Invariant(format!("ledger fails verification at seq {bad}")));
        }
        for a in state.actors.iter() {
            ledger.register_recipient(a.actor_id.clone());
        }
        let channel = Channel::new(scenario.telemetry.channel(), streams::seed(scenario.seed, streams::CHANNEL));
        let sorting_rng = streams::rng(scenario.seed ^ state.now, streams::SORTING);
        Ok(World { scenario, state, ledger, channel, sorting_rng })
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot { scenario: self.scenario.clone(), state: self.state.clone() }
    }

    /// Writes the ledger file and the world snapshot into `dir`.
    pub fn save(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        ledger_file::save(&dir.join(LEDGER_FILE), self.ledger.events())?;
        let snapshot = serde_json::to_string(&self.snapshot()).expect("snapshot serializes");
        std::fs::write(dir.join(WORLD_FILE), snapshot)
    }

    /// Reloads what [`World::save`] wrote. Sensor messages that were still in
    /// flight are not part of the snapshot and are lost.
    pub fn load(dir: &Path) -> Result<Self, WorldError> {
        let io_err = |path: &Path, e: &dyn std::fmt::Display| WorldError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let world_path = dir.join(WORLD_FILE);
        let text = std::fs::read_to_string(&world_path).map_err(|e| io_err(&world_path, &e))?;
        let snapshot: WorldSnapshot = serde_json::from_str(&text).map_err(|e| io_err(&world_path, &e))?;
        let ledger_path = dir.join(LEDGER_FILE);
        let events = ledger_file::load(&ledger_path).map_err(|e| io_err(&ledger_path, &e))?;
        Self::restore(snapshot, events)
    }

    pub fn fleet(&self) -> Fleet {
        Fleet {
            depot: self.state.station.location.clone(),
            truck_count: self.state.trucks.len(),
            capacity_kg: self.scenario.fleet.capacity_kg,
        }
    }

    /// Moves the clock forward; never backwards.
    pub fn advance_to(&mut self, t: u64) {
        self.state.now = self.state.now.max(t);
    }

    /// A timestamp usable for the next ledger append.
    pub fn stamp(&self) -> u64 {
        self.state.now.max(self.ledger.head_timestamp().unwrap_or(0))
    }

    pub fn bin_index(&self, bin_id: &BinId) -> Option<usize> {
        self.state.bins.iter().position(|b| &b.bin_id == bin_id)
    }

    /// Registers the device, drops it in the bin, sends the sensor report, and
    /// credits the citizen: the QR-confirmed deposit flow.
    pub fn confirm_deposit(
        &mut self,
        citizen: &ActorId,
        bin_id: &BinId,
        device: &DeviceDescriptor,
    ) -> Result<DepositReceipt, WorldError> {
        let bin = self.bin_index(bin_id).ok_or_else(|| WorldError::UnknownBin(bin_id.clone()))?;
        match self.state.actors.get(citizen) {
            Some(a) if a.role == Role::Citizen => {}
            _ => return Err(WorldError::UnknownCitizen(citizen.clone())),
        }
        if let Some(p) = &device.producer {
            if self.state.actors.get(p).map(|a| a.role) != Some(Role::Producer) {
                return Err(WorldError::UnknownProducer(p.clone()));
            }
        }
        let ts = self.stamp();
        let mass = device.mass_kg.unwrap_or_else(|| device.category.default_mass_kg());
        let record = self.state.registry.register_with_producer(device.category, mass, device.producer.clone())?;
        let dep = deposit_into_bin(
            &mut self.state.bins[bin],
            &mut self.state.registry,
            &record.device_id,
            citizen,
            &ActorId::new(OPERATOR_ID),
            &mut self.ledger,
            ts,
        )?;
        let c = &mut self.state.counters;
        c.deposits += 1;
        c.deposited_mg += record.mass_mg();
        if dep.overflowed {
            c.overflow_incidents += 1;
        }
        self.channel.send(dep.message.clone(), ts);
        self.state.counters.messages_sent += 1;
        let credit = self.state.rewards.credit_on_deposit(&mut self.ledger, dep.event.seq, ts)?;
        self.state.counters.points_credited += credit.points;
        Ok(DepositReceipt {
            device_id: record.device_id,
            bin_id: bin_id.clone(),
            deposit_seq: dep.event.seq,
            credit_seq: credit.event.seq,
            points: credit.points,
            balance: credit.balance,
            fill_fraction: dep.message.fill_fraction,
            overflowed: dep.overflowed,
        })
    }

    pub fn heartbeat(&mut self, bin: usize, ts: u64) {
        let msg = self.state.bins[bin].report(ts);
        self.channel.send(msg, ts);
        self.state.counters.messages_sent += 1;
    }

    pub fn ingest(&mut self, msg: &TelemetryMessage) -> Result<IngestOutcome, WorldError> {
        let outcome = self.state.hub.ingest(msg)?;
        let c = &mut self.state.counters;
        match outcome {
            IngestOutcome::Accepted => c.accepted += 1,
            IngestOutcome::Duplicate => c.duplicates += 1,
            IngestOutcome::Stale => c.stale += 1,
        }
        Ok(outcome)
    }

    /// Delivers and ingests every channel message due by `t`.
    pub fn deliver_until(&mut self, t: u64) -> Result<(), WorldError> {
        for msg in self.channel.deliver_until(t) {
            self.ingest(&msg)?;
        }
        Ok(())
    }

    /// Runs one routing cycle: plans pickups for every queued alert, plans the
    /// visit-all baseline for comparison, and timetables the trips.
    pub fn dispatch(&mut self, ts: u64) -> Result<Dispatch, WorldError> {
        let requests = self.state.hub.take_pickup_requests();
        let fleet = self.fleet();
        let plan = plan_routes(&requests, &fleet)?;
        let everything: Vec<PickupRequest> = self
            .state
            .hub
            .bins()
            .map(|b| PickupRequest {
                bin_id: b.bin_id.clone(),
                location: b.location.clone(),
                estimated_kg: b.current_kg,
            })
            .collect();
        // the visit-everything schedule only runs on cycles that send a truck out
        let baseline_km = if plan.is_empty() { 0.0 } else { baseline_routes(&everything, &fleet)?.total_distance_km };

        let speed = self.scenario.fleet.speed_kmh;
        let service = self.scenario.fleet.service_secs;
        let travel = |km: f64| (km / speed * 3600.0).round() as u64;
        let mut trips = Vec::with_capacity(plan.routes.len());
        for route in &plan.routes {
            let truck = &mut self.state.trucks[route.truck];
            let mut t = ts.max(truck.available_at);
            let mut prev = &fleet.depot;
            let mut visits = Vec::with_capacity(route.stops.len());
            for stop in &route.stops {
                t += travel(prev.distance_km(&stop.location));
                visits.push((stop.bin_id.clone(), t));
                t += service;
                prev = &stop.location;
            }
            t += travel(prev.distance_km(&fleet.depot));
            truck.available_at = t;
            trips.push(TripSchedule {
                truck: route.truck,
                trip_id: format!("{}/trip-{}", truck.truck_id, truck.trips),
                visits,
                end: t,
            });
            truck.trips += 1;
        }
        let c = &mut self.state.counters;
        c.optimized_km += plan.total_distance_km;
        c.baseline_km += baseline_km;
        c.trips += trips.len() as u64;
        Ok(Dispatch { plan, baseline_km, trips })
    }

    /// Empties as much of the bin as still fits on the truck.
    pub fn visit_bin(&mut self, truck: usize, bin_id: &BinId, ts: u64) -> Result<u64, WorldError> {
        let bin = self.bin_index(bin_id).ok_or_else(|| WorldError::UnknownBin(bin_id.clone()))?;
        let room_mg = kg_to_mg(self.scenario.fleet.capacity_kg).saturating_sub(self.state.trucks[truck].cargo_mg);
        let t = &self.state.trucks[truck];
        let collection = empty_bin(
            &mut self.state.bins[bin],
            &mut self.state.hub,
            &mut self.state.registry,
            &mut self.ledger,
            &t.truck_id,
            &t.crew,
            ts,
            Some(mg_to_kg(room_mg)),
        )?;
        let t = &mut self.state.trucks[truck];
        t.cargo.extend(collection.devices);
        t.cargo_mg += collection.collected_mg;
        self.state.counters.collected_mg += collection.collected_mg;
        self.state.counters.bin_visits += 1;
        Ok(collection.collected_mg)
    }

    /// Hands the truck's cargo to the recycler and queues it for sorting.
    pub fn unload(&mut self, truck: usize, trip_id: &str, ts: u64) -> Result<usize, WorldError> {
        let cargo = std::mem::take(&mut self.state.trucks[truck].cargo);
        let cargo_mg = std::mem::take(&mut self.state.trucks[truck].cargo_mg);
        let truck_id = self.state.trucks[truck].truck_id.clone();
        self.state.station.receive_batch(&mut self.state.registry, &mut self.ledger, trip_id, &truck_id, &cargo, ts)?;
        self.state.counters.unloaded_mg += cargo_mg;
        self.state.station_queue_mg += cargo_mg;
        let n = cargo.len();
        self.state.station_queue.extend(cargo);
        Ok(n)
    }

    /// Classifies and routes the next queued device, then lets compliance see
    /// any recovery.
    pub fn process_next_device(&mut self, ts: u64) -> Result<Option<Processed>, WorldError> {
        let Some(device_id) = self.state.station_queue.pop_front() else {
            return Ok(None);
        };
        let s = &mut self.state;
        s.station.classify(&mut s.registry, &mut self.ledger, &device_id, &mut self.sorting_rng, ts)?;
        let routed =
            s.station.route_disposition(&mut s.registry, &mut self.ledger, &device_id, &mut self.sorting_rng, ts)?;
        let mg = s.registry.get(&device_id).expect("routed device exists").mass_mg();
        s.station_queue_mg -= mg;
        match routed.outcome {
            Outcome::Refurbished => s.counters.refurbished_mg += mg,
            Outcome::Donated => s.counters.donated_mg += mg,
            Outcome::Recovered => s.counters.recovered_mg += mg,
        }
        let certificate = if routed.outcome == Outcome::Recovered {
            s.compliance.auto_issue_certificate(&mut self.ledger, routed.event.seq, ts)?
        } else {
            None
        };
        if certificate.is_some() {
            s.counters.certificates += 1;
        }
        Ok(Some(Processed { device_id, outcome: routed.outcome, certificate }))
    }

    pub fn redeem(&mut self, citizen: &ActorId, item_id: &str) -> Result<Receipt, WorldError> {
        let ts = self.stamp();
        Ok(self.state.rewards.redeem(citizen, item_id, ts)?)
    }

    pub fn in_bins_mg(&self) -> u64 {
        self.state.bins.iter().map(SmartBin::current_mg).sum()
    }

    pub fn in_trucks_mg(&self) -> u64 {
        self.state.trucks.iter().map(|t| t.cargo_mg).sum()
    }

    /// Checks the mass and points identities; the error names the one broken.
    pub fn check_conservation(&self) -> Result<(), WorldError> {
        let c = &self.state.counters;
        let in_bins = self.in_bins_mg();
        let in_trucks = self.in_trucks_mg();
        let queued = self.state.station_queue_mg;
        let accounted = in_bins + in_trucks + queued + c.refurbished_mg + c.donated_mg + c.recovered_mg;
        if c.deposited_mg != accounted {
            return Err(WorldError::Invariant(format!(
                "mass: deposited {} mg != in bins {in_bins} + in transit {in_trucks} + at recycler {queued} + \
                 refurbished {} + donated {} + recovered {} = {accounted} mg",
                c.deposited_mg, c.refurbished_mg, c.donated_mg, c.recovered_mg
            )));
        }
        let by_stage = self.state.registry.mass_by_stage();
        for (stage, expected) in [
            (Stage::Deposited, in_bins),
            (Stage::InTransit, in_trucks),
            (Stage::AtRecycler, queued),
            (Stage::Refurbished, c.refurbished_mg),
            (Stage::Donated, c.donated_mg),
            (Stage::MaterialRecovered, c.recovered_mg),
        ] {
            let held = by_stage.get(&stage).copied().unwrap_or(0);
            if held != expected {
                return Err(WorldError::Invariant(format!(
                    "mass: registry holds {held} mg at {stage:?}, flows give {expected} mg"
                )));
            }
        }
        let balances = self.state.rewards.total_balances();
        let spent = self.state.rewards.total_spent();
        let on_ledger = ledger_credited_points(self.ledger.events());
        if balances + spent != on_ledger || on_ledger != c.points_credited {
            return Err(WorldError::Invariant(format!(
                "points: balances {balances} + spent {spent} != credited on ledger {on_ledger} (engine credited {})",
                c.points_credited
            )));
        }
        Ok(())
    }

    /// One uniform draw per call for deposit-detail sampling, kept here so the
    /// simulation and tests derive devices the same way.
    pub fn sample_device(&self, rng: &mut ChaCha8Rng) -> DeviceDescriptor {
        let mix = self.scenario.citizens.category_mix.to_array();
        let total: f64 = mix.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut category = DeviceCategory::CircuitBoard;
        for (i, w) in mix.iter().enumerate() {
            acc += w;
            if u < acc {
                category = DeviceCategory::ALL[i];
                break;
            }
        }
        let jitter = self.scenario.citizens.mass_jitter;
        let factor = 1.0 + jitter * (2.0 * rng.gen::<f64>() - 1.0);
        // whole grams keep every mass exact in milligrams
        let grams = (category.default_mass_kg() * factor * 1000.0).round().max(1.0);
        let pick = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut producer = None;
        for p in &self.scenario.compliance.producers {
            acc += p.share;
            if pick < acc {
                producer = Some(ActorId::new(p.id.clone()));
                break;
            }
        }
        DeviceDescriptor { category, mass_kg: Some(grams / 1000.0), producer }
    }
}
