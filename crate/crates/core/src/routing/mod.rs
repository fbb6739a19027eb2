//! Pickup routing over alerted bins, and the visit-everything baseline it is
//! measured against.
//!
//! Construction is Clarke-Wright savings, then 2-opt inside each route. Routes
//! beyond the fleet size are further trips by the same trucks.

mod savings;
mod two_opt;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BinId, GeoPoint};
use crate::telemetry::PickupRequest;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("invalid fleet: {0}")]
    InvalidFleet(String),
    #[error("invalid pickup request for {bin}: {reason}")]
    InvalidRequest { bin: BinId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub depot: GeoPoint,
    pub truck_count: usize,
    pub capacity_kg: f64,
}

impl Fleet {
    pub fn validate(&self) -> Result<(), RoutingError> {
        if self.truck_count == 0 {
            return Err(RoutingError::InvalidFleet("at least one truck is required".into()));
        }
        if !self.capacity_kg.is_finite() || self.capacity_kg <= 0.0 {
            return Err(RoutingError::InvalidFleet(format!("capacity must be positive, got {}", self.capacity_kg)));
        }
        self.depot.validate().map_err(|e| RoutingError::InvalidFleet(format!("depot: {e}")))
    }
}

/// Symmetric Euclidean distances; index 0 is the depot.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[&GeoPoint]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = points[i].distance_km(points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStop {
    pub bin_id: BinId,
    pub location: GeoPoint,
    pub load_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub truck: usize,
    /// 0 for a truck's first departure, 1 for its second, and so on.
    pub trip: usize,
    pub stops: Vec<RouteStop>,
    pub distance_km: f64,
    pub load_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RoutePlan {
    pub routes: Vec<Route>,
    pub total_distance_km: f64,
    pub warnings: Vec<String>,
}

impl RoutePlan {
    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn visited_bins(&self) -> BTreeSet<BinId> {
        self.routes.iter().flat_map(|r| r.stops.iter().map(|s| s.bin_id.clone())).collect()
    }

    /// Sums every leg, depot legs included, from the stop coordinates.
    pub fn recompute_distance(&self, depot: &GeoPoint) -> f64 {
        self.routes
            .iter()
            .map(|r| {
                let mut prev = depot;
                let mut total = 0.0;
                for s in &r.stops {
                    total += prev.distance_km(&s.location);
                    prev = &s.location;
                }
                total + prev.distance_km(depot)
            })
            .sum()
    }

    /// Plain-text dump: one line per route.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.routes {
            let bins: Vec<&str> = r.stops.iter().map(|s| s.bin_id.as_str()).collect();
            let _ = writeln!(
                out,
                "truck {} trip {}: depot -> {} -> depot | {:.3} km | {:.3} kg",
                r.truck,
                r.trip,
                bins.join(" -> "),
                r.distance_km,
                r.load_kg
            );
        }
        let _ = writeln!(out, "total: {:.3} km over {} route(s)", self.total_distance_km, self.routes.len());
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Builds a capacity-feasible plan visiting every request.
///
/// A request heavier than one truck is split into full-truck visits plus a
/// remainder visit, with a warning in the plan. Output depends only on the
/// requests, not on their order.
pub fn plan_routes(requests: &[PickupRequest], fleet: &Fleet) -> Result<RoutePlan, RoutingError> {
    fleet.validate()?;
    let mut warnings = Vec::new();
    let mut sorted: Vec<&PickupRequest> = requests.iter().collect();
    sorted.sort_by(|a, b| a.bin_id.cmp(&b.bin_id).then(a.estimated_kg.total_cmp(&b.estimated_kg)));

    // (request, load) visits that are solved by savings, and full-truck shuttles
    let mut visits: Vec<(&PickupRequest, f64)> = Vec::with_capacity(sorted.len());
    let mut shuttles: Vec<(&PickupRequest, f64)> = Vec::new();
    for r in sorted {
        r.location
            .validate()
            .map_err(|e| RoutingError::InvalidRequest { bin: r.bin_id.clone(), reason: e.to_string() })?;
        if !r.estimated_kg.is_finite() || r.estimated_kg < 0.0 {
            return Err(RoutingError::InvalidRequest {
                bin: r.bin_id.clone(),
                reason: format!("estimated mass must be non-negative, got {}", r.estimated_kg),
            });
        }
        if r.estimated_kg > fleet.capacity_kg {
            let full = (r.estimated_kg / fleet.capacity_kg).floor() as usize;
            let rest = r.estimated_kg - full as f64 * fleet.capacity_kg;
            warnings.push(format!(
                "bin {} holds {:.3} kg, above truck capacity {:.3} kg; split into {} visit(s)",
                r.bin_id,
                r.estimated_kg,
                fleet.capacity_kg,
                full + usize::from(rest > 0.0)
            ));
            shuttles.extend(std::iter::repeat_n((r, fleet.capacity_kg), full));
            if rest > 0.0 {
                visits.push((r, rest));
            }
        } else {
            visits.push((r, r.estimated_kg));
        }
    }

    let mut points: Vec<&GeoPoint> = vec![&fleet.depot];
    points.extend(visits.iter().map(|(r, _)| &r.location));
    let dist = DistanceMatrix::from_points(&points);
    let loads: Vec<f64> = visits.iter().map(|(_, l)| *l).collect();

    let mut matrix_routes: Vec<Vec<usize>> = savings::clarke_wright(&dist, &loads, fleet.capacity_kg)
        .into_iter()
        .map(|r| r.into_iter().map(|k| k + 1).collect())
        .collect();
    for route in &mut matrix_routes {
        two_opt::two_opt(&dist, route);
    }
    matrix_routes.sort_by_key(|r| *r.iter().min().expect("non-empty route"));
    let index_routes: Vec<Vec<usize>> =
        matrix_routes.into_iter().map(|r| r.into_iter().map(|m| m - 1).collect()).collect();

    let mut routes: Vec<Route> = Vec::with_capacity(shuttles.len() + index_routes.len());
    for (r, load) in shuttles {
        let leg = fleet.depot.distance_km(&r.location);
        routes.push(Route {
            truck: 0,
            trip: 0,
            stops: vec![RouteStop { bin_id: r.bin_id.clone(), location: r.location.clone(), load_kg: load }],
            distance_km: 2.0 * leg,
            load_kg: load,
        });
    }
    for route in index_routes {
        let matrix_ids: Vec<usize> = route.iter().map(|k| k + 1).collect();
        let stops: Vec<RouteStop> = route
            .iter()
            .map(|&k| RouteStop {
                bin_id: visits[k].0.bin_id.clone(),
                location: visits[k].0.location.clone(),
                load_kg: visits[k].1,
            })
            .collect();
        let load_kg = stops.iter().map(|s| s.load_kg).sum();
        routes.push(Route { truck: 0, trip: 0, stops, distance_km: two_opt::tour_length(&dist, &matrix_ids), load_kg });
    }
    for (k, r) in routes.iter_mut().enumerate() {
        r.truck = k % fleet.truck_count;
        r.trip = k / fleet.truck_count;
    }
    let total_distance_km = routes.iter().map(|r| r.distance_km).sum();
    Ok(RoutePlan { routes, total_distance_km, warnings })
}

/// Fixed-schedule collection: every bin is visited regardless of alerts.
pub fn baseline_routes(all_bins: &[PickupRequest], fleet: &Fleet) -> Result<RoutePlan, RoutingError> {
    plan_routes(all_bins, fleet)
}

/// Fuel and emission conversion for travelled distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuelFactors {
    pub liters_per_km: f64,
    pub co2_kg_per_liter: f64,
}

impl Default for FuelFactors {
    /// Synthetic defaults for a light diesel truck.
    fn default() -> Self {
        FuelFactors { liters_per_km: 0.35, co2_kg_per_liter: 2.68 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteSavings {
    /// `1 - optimized / baseline`; `None` when the baseline distance is zero.
    pub ratio: Option<f64>,
    pub distance_saved_km: f64,
    pub fuel_saved_l: f64,
    pub co2_saved_kg: f64,
}

pub fn savings_ratio(optimized_km: f64, baseline_km: f64) -> Option<f64> {
    (baseline_km > 0.0).then(|| 1.0 - optimized_km / baseline_km)
}

pub fn route_savings(optimized: &RoutePlan, baseline: &RoutePlan, fuel: &FuelFactors) -> RouteSavings {
    let saved = baseline.total_distance_km - optimized.total_distance_km;
    let fuel_saved_l = saved * fuel.liters_per_km;
    RouteSavings {
        ratio: savings_ratio(optimized.total_distance_km, baseline.total_distance_km),
        distance_saved_km: saved,
        fuel_saved_l,
        co2_saved_kg: fuel_saved_l * fuel.co2_kg_per_liter,
    }
}
