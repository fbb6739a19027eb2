//! The event loop. Events run in (time, insertion sequence) order; channel
//! deliveries due by an event's time are ingested just before it.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use greengrid_core::model::BinId;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{summarize, DayMetrics, DayStart, MetricsReport, SECONDS_PER_DAY};
use crate::scenario::Scenario;
use crate::streams;
use crate::world::{DeviceDescriptor, World, WorldError};

pub use crate::world::{LEDGER_FILE, WORLD_FILE};

pub const METRICS_FILE: &str = "metrics.json";

const HOUR: u64 = 3600;

#[derive(Debug, Clone)]
enum SimEvent {
    DayStart { day: u32 },
    Deposit { citizen: usize, device: DeviceDescriptor },
    Heartbeat,
    Dispatch,
    Visit { truck: usize, bin: BinId },
    Unload { truck: usize, trip_id: String },
    Sort,
    DayEnd { day: u32 },
}

#[derive(Default)]
struct Agenda {
    next_seq: u64,
    queue: BTreeMap<(u64, u64), SimEvent>,
}

impl Agenda {
    fn push(&mut self, time: u64, event: SimEvent) {
        self.queue.insert((time, self.next_seq), event);
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<(u64, SimEvent)> {
        self.queue.pop_first().map(|((t, _), e)| (t, e))
    }
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub world: World,
}

impl RunOutput {
    /// Writes the metrics report, the ledger and a world snapshot into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        self.world.save(dir)?;
        std::fs::write(dir.join(METRICS_FILE), self.report.to_json())
    }
}

/// Runs the scenario to its horizon, checking the conservation identities at
/// the end of every day.
pub fn run(scenario: Scenario) -> Result<RunOutput, WorldError> {
    let preset = scenario.rewards.participation()?;
    let mut world = World::new(scenario)?;
    let sc = world.scenario.clone();
    let horizon = u64::from(sc.days) * SECONDS_PER_DAY;
    let propensity = preset.adjust(sc.citizens.base_propensity);
    let generation = sc.citizens.generation_rate.max(propensity);
    let sort_budget_per_hour = sc.sorting.throughput_per_hour;

    let mut agenda = Agenda::default();
    for day in 0..sc.days {
        let start = u64::from(day) * SECONDS_PER_DAY;
        agenda.push(start, SimEvent::DayStart { day });
        agenda.push(start + u64::from(sc.fleet.dispatch_hour) * HOUR, SimEvent::Dispatch);
        agenda.push(start + SECONDS_PER_DAY - 1, SimEvent::DayEnd { day });
    }
    if sc.days > 0 {
        agenda.push(sc.telemetry.heartbeat_secs, SimEvent::Heartbeat);
        agenda.push(HOUR, SimEvent::Sort);
    }

    let mut daily: Vec<DayMetrics> = Vec::with_capacity(sc.days as usize);
    let mut day_start = DayStart::take(&world);
    let mut sort_credit = 0.0f64;

    while let Some((t, event)) = agenda.pop() {
        if t >= horizon {
            break;
        }
        world.deliver_until(t)?;
        world.advance_to(t);
        let ts = world.stamp();
        match event {
            SimEvent::DayStart { day } => {
                day_start = DayStart::take(&world);
                let (h0, h1) = (u64::from(sc.citizens.deposit_start_hour), u64::from(sc.citizens.deposit_end_hour));
                for citizen in 0..world.state.citizens.len() {
                    let mut rng = streams::citizen_day(sc.seed, citizen as u64, u64::from(day));
                    let u: f64 = rng.gen();
                    let at = t + rng.gen_range(h0 * HOUR..h1 * HOUR);
                    let device = world.sample_device(&mut rng);
                    if u < generation {
                        world.state.counters.generated += 1;
                    }
                    if u < propensity {
                        agenda.push(at, SimEvent::Deposit { citizen, device });
                    }
                }
            }
            SimEvent::Deposit { citizen, device } => {
                let c = &world.state.citizens[citizen];
                let (id, bin) = (c.id.clone(), world.state.bins[c.home_bin].bin_id.clone());
                world.confirm_deposit(&id, &bin, &device)?;
            }
            SimEvent::Heartbeat => {
                for bin in 0..world.state.bins.len() {
                    world.heartbeat(bin, ts);
                }
                agenda.push(t + sc.telemetry.heartbeat_secs, SimEvent::Heartbeat);
            }
            SimEvent::Dispatch => {
                let dispatch = world.dispatch(ts)?;
                for trip in dispatch.trips {
                    for (bin, at) in trip.visits {
                        agenda.push(at, SimEvent::Visit { truck: trip.truck, bin });
                    }
                    agenda.push(trip.end, SimEvent::Unload { truck: trip.truck, trip_id: trip.trip_id });
                }
            }
            SimEvent::Visit { truck, bin } => {
                world.visit_bin(truck, &bin, ts)?;
            }
            SimEvent::Unload { truck, trip_id } => {
                world.unload(truck, &trip_id, ts)?;
            }
            SimEvent::Sort => {
                sort_credit += sort_budget_per_hour;
                while sort_credit >= 1.0 && !world.state.station_queue.is_empty() {
                    world.process_next_device(ts)?;
                    sort_credit -= 1.0;
                }
                // unused capacity does not carry over an idle hour
                sort_credit = sort_credit.min(sort_budget_per_hour.max(1.0));
                agenda.push(t + HOUR, SimEvent::Sort);
            }
            SimEvent::DayEnd { day } => {
                world.check_conservation().map_err(|e| match e {
                    WorldError::Invariant(msg) => WorldError::Invariant(format!("day {day}: {msg}")),
                    other => other,
                })?;
                daily.push(day_start.close(day, &world));
            }
        }
    }

    let summary = summarize(&world, sc.days, &sc.fuel);
    let report =
        MetricsReport { scenario: sc.name.clone(), seed: sc.seed, preset: preset.name.clone(), daily, summary };
    Ok(RunOutput { report, world })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRow {
    pub preset: String,
    pub multiplier: f64,
    pub deposits: u64,
    pub generated: u64,
    pub collected_kg: f64,
    pub formal_share: Option<f64>,
    /// Relative to the first row.
    pub deposits_ratio: Option<f64>,
    pub share_ratio: Option<f64>,
}

/// Runs the scenario once per preset with the same seed. Citizen draws are
/// keyed by (citizen, day), so the runs are paired: a citizen who deposits
/// under a lower multiplier also deposits under a higher one.
pub fn compare_presets(scenario: &Scenario, presets: &[&str]) -> Result<Vec<PresetRow>, WorldError> {
    let mut rows: Vec<PresetRow> = Vec::with_capacity(presets.len());
    for name in presets {
        let mut sc = scenario.clone();
        sc.rewards.preset = name.to_string();
        sc.rewards.multiplier = None;
        let multiplier = sc.rewards.participation()?.multiplier;
        let out = run(sc)?;
        let s = &out.report.summary;
        let (deposits_ratio, share_ratio) = match rows.first() {
            Some(base) => (
                (base.deposits > 0).then(|| s.deposits as f64 / base.deposits as f64),
                base.formal_share.zip(s.formal_share).filter(|(b, _)| *b > 0.0).map(|(b, x)| x / b),
            ),
            None => (Some(1.0), s.formal_share.map(|_| 1.0)),
        };
        rows.push(PresetRow {
            preset: name.to_string(),
            multiplier,
            deposits: s.deposits,
            generated: s.generated,
            collected_kg: s.collected_kg,
            formal_share: s.formal_share,
            deposits_ratio,
            share_ratio,
        });
    }
    Ok(rows)
}

pub fn preset_table(rows: &[PresetRow]) -> String {
    let mut out = format!(
        "{:<10} {:>10} {:>9} {:>10} {:>13} {:>7} {:>9} {:>9}\n",
        "preset", "multiplier", "deposits", "generated", "collected kg", "share", "dep ratio", "shr ratio"
    );
    let f = |v: Option<f64>, pct: bool| match v {
        Some(x) if pct => format!("{:.1}%", x * 100.0),
        Some(x) => format!("{x:.3}"),
        None => "-".to_string(),
    };
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>10.2} {:>9} {:>10} {:>13.3} {:>7} {:>9} {:>9}\n",
            r.preset,
            r.multiplier,
            r.deposits,
            r.generated,
            r.collected_kg,
            f(r.formal_share, true),
            f(r.deposits_ratio, false),
            f(r.share_ratio, false)
        ));
    }
    out
}
