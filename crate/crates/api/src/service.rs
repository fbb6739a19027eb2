//! Transport-independent service layer. Every request is checked against the
//! session's capabilities, and mutations run under one write lock, the same
//! serialized commit point the simulation uses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use greengrid_core::compliance::{ComplianceStatus, EprSchedule};
use greengrid_core::impact::{compute_impact, projection, ImpactReport, PROJECTION_YEARS};
use greengrid_core::ledger::{CustodyEvent, EventKind, TimeWindow};
use greengrid_core::model::{ActorId, BinId, DeviceCategory, GeoPoint, Role};
use greengrid_core::rewards::{leaderboard, GroupBy, LeaderboardRow, MarketplaceItem, Receipt, WalletEntry};
use greengrid_core::routing::savings_ratio;
use greengrid_core::sorting::station_throughput;
use greengrid_core::telemetry::{IngestOutcome, TelemetryMessage};
use greengrid_sim::world::{DepositReceipt, DeviceDescriptor, World, WorldError};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::auth::{ApiSession, AuthConfig, Endpoint};
use crate::error::ApiError;

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;
pub const IDEMPOTENCY_FILE: &str = "idempotency.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRequest {
    pub limit: usize,
    pub offset: usize,
}

impl Default for PageRequest {
    fn default() -> Self {
        PageRequest { limit: DEFAULT_LIMIT, offset: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
}

impl<T> Page<T> {
    pub fn of(all: impl IntoIterator<Item = T>, page: PageRequest) -> Self {
        let mut total = 0;
        let mut items = Vec::new();
        for (i, x) in all.into_iter().enumerate() {
            total += 1;
            if i >= page.offset && items.len() < page.limit {
                items.push(x);
            }
        }
        Page { items, total, limit: page.limit, offset: page.offset }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositRequest {
    pub bin_id: BinId,
    pub category: DeviceCategory,
    pub mass_kg: Option<f64>,
    pub producer: Option<ActorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestAck {
    pub bin_id: BinId,
    pub seq: u64,
    pub outcome: IngestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardQuery {
    pub window: TimeWindow,
    pub region: Option<String>,
}

/// Cumulative operating figures next to the windowed ledger figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operations {
    pub deposits_in_window: u64,
    pub sorted_per_hour_in_window: f64,
    pub trips: u64,
    pub optimized_km: f64,
    pub baseline_km: f64,
    pub savings_ratio: Option<f64>,
    pub overflow_incidents: u64,
    pub alerts_raised: u64,
    pub ledger_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub window: TimeWindow,
    pub region: Option<String>,
    pub impact: ImpactReport,
    pub operations: Operations,
    /// Recovered mass over put-on-market mass per producer, current year.
    pub epr_attainment: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditStatement {
    pub producer: String,
    pub year: u32,
    pub label: String,
    /// `compliant`, `shortfall` or `not_applicable`.
    pub statement: String,
    pub status: ComplianceStatus,
    pub put_on_market_kg: f64,
    pub recycled_kg: f64,
    /// MaterialRecovered events credited to the producer in the year.
    pub recovery_seqs: Vec<u64>,
    pub certificate_seqs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalletView {
    pub owner: ActorId,
    pub balance: u64,
    pub credited_points: u64,
    pub history: Page<WalletEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Redemption {
    pub receipt: Receipt,
    pub balance: u64,
    pub stock: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinView {
    pub bin_id: BinId,
    pub location: GeoPoint,
    pub capacity_kg: f64,
    pub current_kg: f64,
    pub fill_fraction: f64,
    pub alert_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerStatus {
    pub ok: bool,
    pub length: usize,
    pub head: String,
    pub first_bad_seq: Option<u64>,
    pub replicas_agree: bool,
    pub no_quorum_head: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub year: u32,
    pub formal_rate_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSaved {
    pub directory: String,
    pub ledger_len: usize,
    pub head: String,
}

/// One request per endpoint, already parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "endpoint", rename_all = "snake_case")]
pub enum ApiRequest {
    ConfirmDeposit(DepositRequest),
    IngestTelemetry(TelemetryMessage),
    DashboardMetrics(DashboardQuery),
    AuditProducer { producer: String, year: Option<u32> },
    Wallet { page: PageRequest },
    Marketplace { page: PageRequest },
    Redeem { item_id: String },
    Leaderboard { by_region: bool, window: TimeWindow, page: PageRequest },
    Bins { page: PageRequest },
    LedgerEvents { page: PageRequest },
    LedgerVerify,
    DeviceTrace { device_id: String },
    Projection,
    Snapshot,
}

impl ApiRequest {
    pub fn endpoint(&self) -> Endpoint {
        match self {
            ApiRequest::ConfirmDeposit(_) => Endpoint::ConfirmDeposit,
            ApiRequest::IngestTelemetry(_) => Endpoint::IngestTelemetry,
            ApiRequest::DashboardMetrics(_) => Endpoint::DashboardMetrics,
            ApiRequest::AuditProducer { .. } => Endpoint::AuditProducer,
            ApiRequest::Wallet { .. } => Endpoint::Wallet,
            ApiRequest::Marketplace { .. } => Endpoint::Marketplace,
            ApiRequest::Redeem { .. } => Endpoint::Redeem,
            ApiRequest::Leaderboard { .. } => Endpoint::Leaderboard,
            ApiRequest::Bins { .. } => Endpoint::Bins,
            ApiRequest::LedgerEvents { .. } => Endpoint::LedgerEvents,
            ApiRequest::LedgerVerify => Endpoint::LedgerVerify,
            ApiRequest::DeviceTrace { .. } => Endpoint::DeviceTrace,
            ApiRequest::Projection => Endpoint::Projection,
            ApiRequest::Snapshot => Endpoint::Snapshot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredResponse {
    request: Value,
    response: Value,
}

/// Successful responses to mutating requests, keyed by (actor, endpoint,
/// idempotency key). Failed requests change nothing and are not stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct IdempotencyCache {
    entries: BTreeMap<String, StoredResponse>,
}

impl IdempotencyCache {
    fn slot(session: &ApiSession, endpoint: Endpoint, key: &str) -> String {
        format!("{}\u{1f}{endpoint:?}\u{1f}{key}", session.actor)
    }
}

struct Inner {
    world: World,
    idempotency: IdempotencyCache,
}

pub struct ApiService {
    inner: RwLock<Inner>,
    sessions: BTreeMap<String, ApiSession>,
    state_dir: Option<PathBuf>,
}

fn world_error(e: WorldError) -> ApiError {
    use greengrid_core::rewards::RewardsError;
    use greengrid_core::telemetry::TelemetryError;
    match e {
        WorldError::UnknownBin(b) | WorldError::Telemetry(TelemetryError::UnknownBin(b)) => {
            ApiError::not_found(format!("unknown bin {b}"))
        }
        WorldError::UnknownCitizen(c) => ApiError::not_found(format!("unknown citizen {c}")),
        WorldError::UnknownProducer(p) => ApiError::bad_field("producer", format!("unknown producer {p}")),
        WorldError::Model(m) => ApiError::bad_field("mass_kg", m.to_string()),
        WorldError::Rewards(r) => match r {
            RewardsError::UnknownItem(i) => ApiError::not_found(format!("no catalog item {i}")),
            RewardsError::InsufficientBalance { .. } | RewardsError::OutOfStock(_) => ApiError::conflict(r.to_string()),
            other => ApiError::internal(other.to_string()),
        },
        other => ApiError::internal(other.to_string()),
    }
}

impl ApiService {
    pub fn new(world: World, auth: &AuthConfig, state_dir: Option<PathBuf>) -> Result<Self, String> {
        let sessions = auth.sessions(&world.state.actors)?;
        let idempotency = match &state_dir {
            Some(dir) if dir.join(IDEMPOTENCY_FILE).exists() => {
                let path = dir.join(IDEMPOTENCY_FILE);
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            _ => IdempotencyCache::default(),
        };
        Ok(ApiService { inner: RwLock::new(Inner { world, idempotency }), sessions, state_dir })
    }

    /// Reloads a saved world and its ledger from `dir` and keeps saving there.
    pub fn load(dir: &Path, auth: Option<&AuthConfig>) -> Result<Self, String> {
        let world = World::load(dir).map_err(|e| e.to_string())?;
        let auth = auth.cloned().unwrap_or_else(|| AuthConfig::demo(&world.state.actors));
        Self::new(world, &auth, Some(dir.to_path_buf()))
    }

    pub fn authenticate(&self, bearer: Option<&str>) -> Result<&ApiSession, ApiError> {
        let token = bearer.ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        self.sessions.get(token).ok_or_else(|| ApiError::unauthorized("unknown bearer token"))
    }

    pub fn session(&self, token: &str) -> Option<&ApiSession> {
        self.sessions.get(token)
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against a read view of the world.
    pub fn with_world<T>(&self, f: impl FnOnce(&World) -> T) -> T {
        f(&self.read().world)
    }

    /// Checks the capability table, then dispatches. Mutating requests with an
    /// idempotency key return the stored response on replay; reusing a key
    /// for a different request is a conflict.
    pub fn call(&self, session: &ApiSession, request: ApiRequest, key: Option<&str>) -> Result<Value, ApiError> {
        let endpoint = request.endpoint();
        session.require(endpoint)?;
        if !endpoint.is_mutating() {
            let inner = self.read();
            return self.query(&inner.world, session, request);
        }
        let mut inner = self.write();
        let fingerprint = serde_json::to_value(&request).expect("requests serialize");
        let slot = key.map(|k| IdempotencyCache::slot(session, endpoint, k));
        if let Some(stored) = slot.as_ref().and_then(|s| inner.idempotency.entries.get(s)) {
            if stored.request != fingerprint {
                return Err(ApiError::conflict("idempotency key was used for a different request"));
            }
            return Ok(stored.response.clone());
        }
        let response = self.mutate(&mut inner, session, request)?;
        if let Some(slot) = slot {
            inner.idempotency.entries.insert(slot, StoredResponse { request: fingerprint, response: response.clone() });
        }
        Ok(response)
    }

    fn mutate(&self, inner: &mut Inner, session: &ApiSession, request: ApiRequest) -> Result<Value, ApiError> {
        let world = &mut inner.world;
        match request {
            ApiRequest::ConfirmDeposit(req) => {
                let receipt = confirm_deposit(world, &session.actor, req)?;
                Ok(to_value(&receipt))
            }
            ApiRequest::IngestTelemetry(msg) => {
                if !msg.fill_fraction.is_finite() || msg.fill_fraction < 0.0 {
                    return Err(ApiError::bad_field("fill_fraction", "must be a finite non-negative number"));
                }
                let outcome = world.ingest(&msg).map_err(world_error)?;
                Ok(to_value(&IngestAck { bin_id: msg.bin_id, seq: msg.seq, outcome }))
            }
            ApiRequest::Redeem { item_id } => {
                let receipt = world.redeem(&session.actor, &item_id).map_err(world_error)?;
                let balance = world.state.rewards.balance(&session.actor);
                let stock = world.state.rewards.item(&item_id).map_or(0, |i| i.stock);
                Ok(to_value(&Redemption { receipt, balance, stock }))
            }
            ApiRequest::Snapshot => {
                let dir = self
                    .state_dir
                    .as_ref()
                    .ok_or_else(|| ApiError::conflict("the service was started without a state directory"))?;
                world.save(dir).map_err(|e| ApiError::internal(e.to_string()))?;
                let cache = serde_json::to_string(&inner.idempotency).expect("cache serializes");
                std::fs::write(dir.join(IDEMPOTENCY_FILE), cache).map_err(|e| ApiError::internal(e.to_string()))?;
                let world = &inner.world;
                Ok(to_value(&SnapshotSaved {
                    directory: dir.display().to_string(),
                    ledger_len: world.ledger.len(),
                    head: world.ledger.head().to_hex(),
                }))
            }
            other => self.query(world, session, other),
        }
    }

    fn query(&self, world: &World, session: &ApiSession, request: ApiRequest) -> Result<Value, ApiError> {
        Ok(match request {
            ApiRequest::DashboardMetrics(q) => to_value(&dashboard(world, &q)),
            ApiRequest::AuditProducer { producer, year } => to_value(&audit_producer(world, &producer, year)?),
            ApiRequest::Wallet { page } => {
                let rewards = &world.state.rewards;
                let (balance, credited, history) = match rewards.wallet(&session.actor) {
                    Some(w) => (w.balance, w.credited_points(), Page::of(w.history.iter().cloned(), page)),
                    None => (0, 0, Page::of(Vec::new(), page)),
                };
                to_value(&WalletView { owner: session.actor.clone(), balance, credited_points: credited, history })
            }
            ApiRequest::Marketplace { page } => {
                to_value(&Page::<MarketplaceItem>::of(world.state.rewards.catalog().cloned(), page))
            }
            ApiRequest::Leaderboard { by_region, window, page } => {
                let by = if by_region { GroupBy::Region } else { GroupBy::Citizen };
                to_value(&Page::<LeaderboardRow>::of(leaderboard(world.ledger.events(), by, window), page))
            }
            ApiRequest::Bins { page } => {
                let bins = world.state.hub.bins().map(|b| BinView {
                    bin_id: b.bin_id.clone(),
                    location: b.location.clone(),
                    capacity_kg: b.capacity_kg,
                    current_kg: b.current_kg,
                    fill_fraction: b.fill_fraction,
                    alert_active: b.alert_active,
                });
                to_value(&Page::of(bins, page))
            }
            ApiRequest::LedgerEvents { page } => {
                to_value(&Page::<&CustodyEvent>::of(world.ledger.events().iter().map(|e| e.as_ref()), page))
            }
            ApiRequest::LedgerVerify => {
                let v = world.ledger.verify();
                let audit = world.ledger.cross_audit().ok();
                to_value(&LedgerStatus {
                    ok: v.is_ok(),
                    length: world.ledger.len(),
                    head: world.ledger.head().to_hex(),
                    first_bad_seq: v.first_bad_seq(),
                    replicas_agree: audit.as_ref().is_some_and(|a| a.all_agree()),
                    no_quorum_head: audit.as_ref().is_some_and(|a| a.no_quorum_head()),
                })
            }
            ApiRequest::DeviceTrace { device_id } => {
                let trail = world.ledger.trace_device(&device_id);
                if trail.is_empty() {
                    return Err(ApiError::not_found(format!("no custody events for {device_id}")));
                }
                to_value(&trail)
            }
            ApiRequest::Projection => {
                let points: Vec<ProjectionPoint> = (0..=PROJECTION_YEARS)
                    .map(|year| ProjectionPoint { year, formal_rate_percent: projection(year).expect("year in range") })
                    .collect();
                to_value(&points)
            }
            ApiRequest::ConfirmDeposit(_)
            | ApiRequest::IngestTelemetry(_)
            | ApiRequest::Redeem { .. }
            | ApiRequest::Snapshot => {
                return Err(ApiError::internal("mutating request routed to a read view"));
            }
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("responses serialize")
}

fn confirm_deposit(world: &mut World, citizen: &ActorId, req: DepositRequest) -> Result<DepositReceipt, ApiError> {
    if let Some(m) = req.mass_kg {
        if !m.is_finite() || m <= 0.0 {
            return Err(ApiError::bad_field("mass_kg", format!("must be positive, got {m}")));
        }
    }
    if world.bin_index(&req.bin_id).is_none() {
        return Err(ApiError::not_found(format!("unknown bin {}", req.bin_id)));
    }
    let device = DeviceDescriptor { category: req.category, mass_kg: req.mass_kg, producer: req.producer };
    world.confirm_deposit(citizen, &req.bin_id, &device).map_err(world_error)
}

/// Recomputes the dashboard from the ledger; only the routing and overflow
/// figures, which never reach the ledger, come from the operating counters.
pub fn dashboard(world: &World, q: &DashboardQuery) -> Dashboard {
    let events = world.ledger.events();
    let impact = compute_impact(events, q.window, q.region.as_deref(), &world.scenario.impact);
    let deposits_in_window = events
        .iter()
        .filter(|e| e.event_kind == EventKind::Deposit && q.window.contains(e.timestamp))
        .filter(|e| q.region.as_deref().is_none_or(|r| e.location.region.as_str() == r))
        .count() as u64;
    let clipped =
        TimeWindow::new(q.window.start, q.window.end.min(world.stamp().max(q.window.start + 1))).unwrap_or(q.window);
    let c = &world.state.counters;
    let tracker = &world.state.compliance;
    let year = tracker.year_of(world.stamp());
    let mut put_on_market = BTreeMap::new();
    for ob in tracker.obligations() {
        put_on_market.insert(ob.producer.to_string(), ob.put_on_market_kg.get(&year).copied().unwrap_or(0.0));
    }
    Dashboard {
        window: q.window,
        region: q.region.clone(),
        epr_attainment: impact.epr_attainment(&put_on_market),
        impact,
        operations: Operations {
            deposits_in_window,
            sorted_per_hour_in_window: station_throughput(events, clipped),
            trips: c.trips,
            optimized_km: c.optimized_km,
            baseline_km: c.baseline_km,
            savings_ratio: savings_ratio(c.optimized_km, c.baseline_km),
            overflow_incidents: c.overflow_incidents,
            alerts_raised: world.state.hub.alerts_raised,
            ledger_len: world.ledger.len(),
        },
    }
}

pub fn audit_producer(world: &World, producer: &str, year: Option<u32>) -> Result<AuditStatement, ApiError> {
    let id = ActorId::new(producer);
    let known = world.state.actors.get(&id).is_some_and(|a| a.role == Role::Producer);
    if !known {
        return Err(ApiError::not_found(format!("unknown producer {producer}")));
    }
    let tracker = &world.state.compliance;
    let year = year.unwrap_or_else(|| tracker.year_of(world.stamp()));
    let status = tracker.check(&id, year).map_err(|e| ApiError::bad_field("year", e.to_string()))?;
    let window = tracker.year_window(year).ok_or_else(|| ApiError::bad_field("year", "before the first year"))?;
    let ob = tracker.obligation(&id);
    let mut recovery_seqs = Vec::new();
    let mut certificate_seqs = Vec::new();
    for e in world.ledger.events() {
        if e.payload_value(greengrid_core::ledger::keys::PRODUCER) != Some(producer) {
            continue;
        }
        match e.event_kind {
            EventKind::MaterialRecovered if window.contains(e.timestamp) => recovery_seqs.push(e.seq),
            EventKind::CertificateIssued
                if e.payload_value(greengrid_core::ledger::keys::YEAR) == Some(year.to_string().as_str()) =>
            {
                certificate_seqs.push(e.seq)
            }
            _ => {}
        }
    }
    let statement = match status {
        ComplianceStatus::Compliant { .. } => "compliant",
        ComplianceStatus::Shortfall { .. } => "shortfall",
        ComplianceStatus::NotApplicable => "not_applicable",
    };
    Ok(AuditStatement {
        producer: producer.to_string(),
        year,
        label: EprSchedule::label(year),
        statement: statement.to_string(),
        status,
        put_on_market_kg: ob.and_then(|o| o.put_on_market_kg.get(&year).copied()).unwrap_or(0.0),
        recycled_kg: ob.map_or(0.0, |o| o.recycled_kg(year)),
        recovery_seqs,
        certificate_seqs,
    })
}

/// Field-checked request parsing shared by transports.
pub mod parse {
    use super::*;

    fn object(body: &Value) -> Result<&Map<String, Value>, ApiError> {
        body.as_object().ok_or_else(|| ApiError::bad_field("body", "expected a JSON object"))
    }

    fn req_str<'a>(o: &'a Map<String, Value>, field: &str) -> Result<&'a str, ApiError> {
        match o.get(field) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s),
            Some(_) => Err(ApiError::bad_field(field, "expected a non-empty string")),
            None => Err(ApiError::bad_field(field, "missing")),
        }
    }

    fn opt_str<'a>(o: &'a Map<String, Value>, field: &str) -> Result<Option<&'a str>, ApiError> {
        match o.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(_) => req_str(o, field).map(Some),
        }
    }

    fn req_f64(o: &Map<String, Value>, field: &str) -> Result<f64, ApiError> {
        o.get(field).and_then(Value::as_f64).ok_or_else(|| ApiError::bad_field(field, "expected a number"))
    }

    fn req_u64(o: &Map<String, Value>, field: &str) -> Result<u64, ApiError> {
        o.get(field)
            .and_then(Value::as_u64)
            .ok_or_else(|| ApiError::bad_field(field, "expected a non-negative integer"))
    }

    pub fn deposit(body: &Value) -> Result<DepositRequest, ApiError> {
        let o = object(body)?;
        let bin_id = BinId::new(req_str(o, "bin_id")?);
        let category = req_str(o, "category")?
            .parse::<DeviceCategory>()
            .map_err(|e| ApiError::bad_field("category", e.to_string()))?;
        let mass_kg = match o.get("mass_kg") {
            None | Some(Value::Null) => None,
            Some(_) => Some(req_f64(o, "mass_kg")?),
        };
        let producer = opt_str(o, "producer")?.map(ActorId::new);
        Ok(DepositRequest { bin_id, category, mass_kg, producer })
    }

    pub fn telemetry(body: &Value) -> Result<TelemetryMessage, ApiError> {
        let o = object(body)?;
        Ok(TelemetryMessage {
            bin_id: BinId::new(req_str(o, "bin_id")?),
            seq: req_u64(o, "seq")?,
            fill_fraction: req_f64(o, "fill_fraction")?,
            timestamp: req_u64(o, "timestamp")?,
        })
    }

    pub fn redeem(body: &Value) -> Result<String, ApiError> {
        Ok(req_str(object(body)?, "item_id")?.to_string())
    }

    fn query_u64(query: &BTreeMap<String, String>, field: &str) -> Result<Option<u64>, ApiError> {
        query
            .get(field)
            .map(|v| v.parse::<u64>().map_err(|_| ApiError::bad_field(field, "expected a non-negative integer")))
            .transpose()
    }

    pub fn page(query: &BTreeMap<String, String>) -> Result<PageRequest, ApiError> {
        let limit = query_u64(query, "limit")?.map_or(DEFAULT_LIMIT, |l| (l as usize).min(MAX_LIMIT));
        let offset = query_u64(query, "offset")?.unwrap_or(0) as usize;
        Ok(PageRequest { limit, offset })
    }

    pub fn window(query: &BTreeMap<String, String>) -> Result<TimeWindow, ApiError> {
        let start = query_u64(query, "start")?.unwrap_or(0);
        let end = query_u64(query, "end")?.unwrap_or(u64::MAX);
        TimeWindow::new(start, end).ok_or_else(|| ApiError::bad_field("end", "must not precede start"))
    }

    pub fn dashboard(query: &BTreeMap<String, String>) -> Result<DashboardQuery, ApiError> {
        Ok(DashboardQuery { window: window(query)?, region: query.get("region").cloned() })
    }

    pub fn year(query: &BTreeMap<String, String>) -> Result<Option<u32>, ApiError> {
        query
            .get("year")
            .map(|v| v.parse::<u32>().map_err(|_| ApiError::bad_field("year", "expected a compliance year 1..=5")))
            .transpose()
    }

    pub fn group_by_region(query: &BTreeMap<String, String>) -> Result<bool, ApiError> {
        match query.get("by").map(String::as_str) {
            None | Some("citizen") => Ok(false),
            Some("region") => Ok(true),
            Some(other) => Err(ApiError::bad_field("by", format!("expected citizen or region, got {other}"))),
        }
    }
}
