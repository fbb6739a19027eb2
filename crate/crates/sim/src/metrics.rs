//! Daily and whole-run figures. Every mass is derived from integer
//! milligram counters, so two equal runs print equal reports.

use greengrid_core::compliance::{ComplianceStatus, EprSchedule};
use greengrid_core::impact::{compute_impact, ImpactReport};
use greengrid_core::ledger::TimeWindow;
use greengrid_core::model::mg_to_kg;
use greengrid_core::routing::{savings_ratio, FuelFactors};
use greengrid_core::sorting::Tallies;
use serde::{Deserialize, Serialize};

use crate::world::{Counters, World};

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: u32,
    pub deposits: u64,
    pub generated: u64,
    pub formal_share: Option<f64>,
    pub deposited_kg: f64,
    pub collected_kg: f64,
    pub overflow_incidents: u64,
    pub trips: u64,
    pub bin_visits: u64,
    pub optimized_km: f64,
    pub baseline_km: f64,
    pub savings_ratio: Option<f64>,
    pub classified: u64,
    pub misclassified: u64,
    pub refurbished: u64,
    pub donated: u64,
    pub recovered: u64,
    pub points_credited: u64,
    pub certificates: u64,
    pub messages_sent: u64,
    pub messages_accepted: u64,
    pub messages_duplicate: u64,
    pub messages_stale: u64,
    /// Stocks at the end of the day.
    pub in_bins_kg: f64,
    pub in_transit_kg: f64,
    pub at_recycler_kg: f64,
    pub wallet_total: u64,
    pub points_spent: u64,
    pub ledger_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerCompliance {
    pub producer: String,
    pub year: String,
    pub put_on_market_kg: f64,
    pub recycled_kg: f64,
    pub status: ComplianceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub days: u32,
    pub deposits: u64,
    pub generated: u64,
    pub formal_share: Option<f64>,
    pub deposited_kg: f64,
    pub collected_kg: f64,
    pub in_bins_kg: f64,
    pub in_transit_kg: f64,
    pub at_recycler_kg: f64,
    pub refurbished_kg: f64,
    pub donated_kg: f64,
    pub recovered_kg: f64,
    pub overflow_incidents: u64,
    pub trips: u64,
    pub optimized_km: f64,
    pub baseline_km: f64,
    pub savings_ratio: Option<f64>,
    pub fuel_saved_l: f64,
    pub co2_saved_kg: f64,
    pub tallies: Tallies,
    pub points_credited: u64,
    pub points_spent: u64,
    pub wallet_total: u64,
    pub certificates: u64,
    pub alerts_raised: u64,
    pub impact: ImpactReport,
    pub compliance: Vec<ProducerCompliance>,
    pub ledger_len: usize,
    pub ledger_head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub preset: String,
    pub daily: Vec<DayMetrics>,
    pub summary: Summary,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!("scenario {} seed {} preset {}\n", self.scenario, self.seed, self.preset);
        out.push_str(&format!(
            "{:>4} {:>8} {:>8} {:>7} {:>11} {:>11} {:>8} {:>10} {:>10} {:>8} {:>8} {:>7}\n",
            "day",
            "deposits",
            "generated",
            "share",
            "deposit kg",
            "collect kg",
            "overflow",
            "route km",
            "base km",
            "savings",
            "sorted",
            "certs"
        ));
        for d in &self.daily {
            out.push_str(&format!(
                "{:>4} {:>8} {:>8} {:>7} {:>11.3} {:>11.3} {:>8} {:>10.2} {:>10.2} {:>8} {:>8} {:>7}\n",
                d.day,
                d.deposits,
                d.generated,
                opt_pct(d.formal_share),
                d.deposited_kg,
                d.collected_kg,
                d.overflow_incidents,
                d.optimized_km,
                d.baseline_km,
                opt_pct(d.savings_ratio),
                d.classified,
                d.certificates
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "\ntotal: {} deposits of {} generated (formal share {}), {:.3} kg deposited, {:.3} kg collected\n",
            s.deposits,
            s.generated,
            opt_pct(s.formal_share),
            s.deposited_kg,
            s.collected_kg
        ));
        out.push_str(&format!(
            "stocks: {:.3} kg in bins, {:.3} kg in transit, {:.3} kg at recycler, {:.3} refurbished, {:.3} donated, \
             {:.3} recovered\n",
            s.in_bins_kg, s.in_transit_kg, s.at_recycler_kg, s.refurbished_kg, s.donated_kg, s.recovered_kg
        ));
        out.push_str(&format!(
            "routing: {} trips, {:.2} km vs {:.2} km baseline, savings {}, fuel saved {:.2} l, CO2 saved {:.2} kg\n",
            s.trips,
            s.optimized_km,
            s.baseline_km,
            opt_pct(s.savings_ratio),
            s.fuel_saved_l,
            s.co2_saved_kg
        ));
        out.push_str(&format!(
            "sorting: {} classified, {} misclassified, {} refurbished, {} donated, {} recovered\n",
            s.tallies.classified,
            s.tallies.misclassified,
            s.tallies.refurbished,
            s.tallies.donated,
            s.tallies.recovered
        ));
        out.push_str(&format!(
            "points: {} credited, {} spent, {} in wallets\n",
            s.points_credited, s.points_spent, s.wallet_total
        ));
        out.push_str(&format!(
            "impact: {} devices collected, {:.3} kg recycled, {} active users, {:.2} kg CO2 avoided, {:.0} l water \
             saved, {:.3} g gold\n",
            s.impact.devices_collected,
            s.impact.mass_recycled_kg,
            s.impact.active_users,
            s.impact.co2_avoided_kg,
            s.impact.water_saved_l,
            s.impact.gold_recovered_g
        ));
        for c in &s.compliance {
            let status = match c.status {
                ComplianceStatus::Compliant { ratio, target } => {
                    format!("compliant {:.1}% of target {:.0}%", ratio * 100.0, target * 100.0)
                }
                ComplianceStatus::Shortfall { ratio, target, shortfall_kg } => format!(
                    "shortfall {:.1}% of target {:.0}%, {shortfall_kg:.3} kg short",
                    ratio * 100.0,
                    target * 100.0
                ),
                ComplianceStatus::NotApplicable => "not applicable".to_string(),
            };
            out.push_str(&format!("epr {} {}: {:.3} kg recycled, {status}\n", c.producer, c.year, c.recycled_kg));
        }
        out.push_str(&format!("ledger: {} events, head {}\n", s.ledger_len, s.ledger_head));
        out
    }
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", x * 100.0))
}

fn share(deposits: u64, generated: u64) -> Option<f64> {
    (generated > 0).then(|| deposits as f64 / generated as f64)
}

/// Counter readings taken at the start of a day.
#[derive(Debug, Clone)]
pub struct DayStart {
    pub counters: Counters,
    pub tallies: Tallies,
}

impl DayStart {
    pub fn take(world: &World) -> Self {
        DayStart { counters: world.state.counters.clone(), tallies: world.state.station.tallies.clone() }
    }

    pub fn close(&self, day: u32, world: &World) -> DayMetrics {
        let (a, b) = (&self.counters, &world.state.counters);
        let (ta, tb) = (&self.tallies, &world.state.station.tallies);
        let optimized_km = b.optimized_km - a.optimized_km;
        let baseline_km = b.baseline_km - a.baseline_km;
        let deposits = b.deposits - a.deposits;
        let generated = b.generated - a.generated;
        DayMetrics {
            day,
            deposits,
            generated,
            formal_share: share(deposits, generated),
            deposited_kg: mg_to_kg(b.deposited_mg - a.deposited_mg),
            collected_kg: mg_to_kg(b.collected_mg - a.collected_mg),
            overflow_incidents: b.overflow_incidents - a.overflow_incidents,
            trips: b.trips - a.trips,
            bin_visits: b.bin_visits - a.bin_visits,
            optimized_km,
            baseline_km,
            savings_ratio: savings_ratio(optimized_km, baseline_km),
            classified: tb.classified - ta.classified,
            misclassified: tb.misclassified - ta.misclassified,
            refurbished: tb.refurbished - ta.refurbished,
            donated: tb.donated - ta.donated,
            recovered: tb.recovered - ta.recovered,
            points_credited: b.points_credited - a.points_credited,
            certificates: b.certificates - a.certificates,
            messages_sent: b.messages_sent - a.messages_sent,
            messages_accepted: b.accepted - a.accepted,
            messages_duplicate: b.duplicates - a.duplicates,
            messages_stale: b.stale - a.stale,
            in_bins_kg: mg_to_kg(world.in_bins_mg()),
            in_transit_kg: mg_to_kg(world.in_trucks_mg()),
            at_recycler_kg: mg_to_kg(world.state.station_queue_mg),
            wallet_total: world.state.rewards.total_balances(),
            points_spent: world.state.rewards.total_spent(),
            ledger_len: world.ledger.len(),
        }
    }
}

pub fn summarize(world: &World, days: u32, fuel: &FuelFactors) -> Summary {
    let c = &world.state.counters;
    let end = u64::from(days) * SECONDS_PER_DAY;
    let window = TimeWindow::new(0, end.max(1)).expect("non-empty window");
    let impact = compute_impact(world.ledger.events(), window, None, &world.scenario.impact);
    let distance_saved = c.baseline_km - c.optimized_km;
    let fuel_saved_l = distance_saved * fuel.liters_per_km;

    let tracker = &world.state.compliance;
    let last_year = tracker.year_of(end.saturating_sub(1)).min(5);
    let mut compliance = Vec::new();
    for ob in tracker.obligations() {
        for year in tracker.start_year..=last_year {
            let Ok(status) = tracker.check(&ob.producer, year) else { continue };
            compliance.push(ProducerCompliance {
                producer: ob.producer.to_string(),
                year: EprSchedule::label(year),
                put_on_market_kg: ob.put_on_market_kg.get(&year).copied().unwrap_or(0.0),
                recycled_kg: ob.recycled_kg(year),
                status,
            });
        }
    }

    Summary {
        days,
        deposits: c.deposits,
        generated: c.generated,
        formal_share: share(c.deposits, c.generated),
        deposited_kg: mg_to_kg(c.deposited_mg),
        collected_kg: mg_to_kg(c.collected_mg),
        in_bins_kg: mg_to_kg(world.in_bins_mg()),
        in_transit_kg: mg_to_kg(world.in_trucks_mg()),
        at_recycler_kg: mg_to_kg(world.state.station_queue_mg),
        refurbished_kg: mg_to_kg(c.refurbished_mg),
        donated_kg: mg_to_kg(c.donated_mg),
        recovered_kg: mg_to_kg(c.recovered_mg),
        overflow_incidents: c.overflow_incidents,
        trips: c.trips,
        optimized_km: c.optimized_km,
        baseline_km: c.baseline_km,
        savings_ratio: savings_ratio(c.optimized_km, c.baseline_km),
        fuel_saved_l,
        co2_saved_kg: fuel_saved_l * fuel.co2_kg_per_liter,
        tallies: world.state.station.tallies.clone(),
        points_credited: c.points_credited,
        points_spent: world.state.rewards.total_spent(),
        wallet_total: world.state.rewards.total_balances(),
        certificates: c.certificates,
        alerts_raised: world.state.hub.alerts_raised,
        impact,
        compliance,
        ledger_len: world.ledger.len(),
        ledger_head: world.ledger.head().to_hex(),
    }
}
