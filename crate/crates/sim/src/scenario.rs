//! Scenario files: every tunable of a run, with synthetic defaults.
//!
//! A scenario is a TOML document with one table per subsystem. Missing keys
//! take their defaults, unknown keys are rejected, and [`Scenario::validate`]
//! names the first offending field.

use std::path::Path;

use greengrid_core::compliance::EprSchedule;
use greengrid_core::impact::ImpactFactors;
use greengrid_core::model::{CategoryTable, DeviceCategory, PointTable};
use greengrid_core::rewards::{default_catalog, MarketplaceItem, ParticipationPreset};
use greengrid_core::routing::FuelFactors;
use greengrid_core::sorting::{ConfusionModel, MEASURED_RECALL};
use greengrid_core::telemetry::ChannelModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub days: u32,
    pub citizens: CitizenConfig,
    pub bins: BinConfig,
    pub fleet: FleetConfig,
    pub fuel: FuelFactors,
    pub telemetry: TelemetryConfig,
    pub sorting: SortingConfig,
    pub rewards: RewardsConfig,
    pub impact: ImpactFactors,
    pub compliance: ComplianceConfig,
    pub ledger: LedgerConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".to_string(),
            seed: 42,
            days: 90,
            citizens: CitizenConfig::default(),
            bins: BinConfig::default(),
            fleet: FleetConfig::default(),
            fuel: FuelFactors::default(),
            telemetry: TelemetryConfig::default(),
            sorting: SortingConfig::default(),
            rewards: RewardsConfig::default(),
            impact: ImpactFactors::default(),
            compliance: ComplianceConfig::default(),
            ledger: LedgerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitizenConfig {
    pub count: u32,
    /// Daily probability that a citizen brings a device to a bin.
    pub base_propensity: f64,
    /// Daily probability that a citizen discards a device through any channel.
    pub generation_rate: f64,
    pub category_mix: CategoryTable<f64>,
    /// Device mass is the category default times a factor in `1 ± mass_jitter`.
    pub mass_jitter: f64,
    pub deposit_start_hour: u32,
    pub deposit_end_hour: u32,
}

impl Default for CitizenConfig {
    fn default() -> Self {
        CitizenConfig {
            count: 1000,
            base_propensity: 0.10,
            generation_rate: 0.23,
            category_mix: CategoryTable { smartphone: 0.50, laptop_tablet: 0.25, battery: 0.15, circuit_board: 0.10 },
            mass_jitter: 0.2,
            deposit_start_hour: 8,
            deposit_end_hour: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub count: u32,
    /// Bins and citizens live on a `plane_km` × `plane_km` square.
    pub plane_km: f64,
    pub capacity_kg: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig { count: 30, plane_km: 10.0, capacity_kg: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub trucks: u32,
    pub capacity_kg: f64,
    pub depot_x: f64,
    pub depot_y: f64,
    pub speed_kmh: f64,
    pub service_secs: u64,
    /// Hour of day at which the daily routing cycle runs.
    pub dispatch_hour: u32,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            trucks: 2,
            capacity_kg: 200.0,
            depot_x: 5.0,
            depot_y: 5.0,
            speed_kmh: 30.0,
            service_secs: 300,
            dispatch_hour: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetryConfig {
    pub threshold: f64,
    pub heartbeat_secs: u64,
    pub p_loss: f64,
    pub p_duplicate: f64,
    pub max_delay_s: u64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        TelemetryConfig { threshold: 0.80, heartbeat_secs: 3600, p_loss: 0.02, p_duplicate: 0.02, max_delay_s: 120 }
    }
}

impl TelemetryConfig {
    pub fn channel(&self) -> ChannelModel {
        ChannelModel { p_loss: self.p_loss, p_duplicate: self.p_duplicate, max_delay_s: self.max_delay_s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SortingConfig {
    /// Diagonal of the uniform-spread confusion model.
    pub recall: CategoryTable<f64>,
    /// Full matrix, rows by true category; overrides `recall` when present.
    pub matrix: Option<[[f64; 4]; 4]>,
    pub p_func: CategoryTable<f64>,
    pub donate_share: f64,
    pub throughput_per_hour: f64,
}

impl Default for SortingConfig {
    fn default() -> Self {
        SortingConfig {
            recall: MEASURED_RECALL,
            matrix: None,
            p_func: CategoryTable::from_fn(|_| greengrid_core::sorting::DEFAULT_P_FUNCTIONAL),
            donate_share: greengrid_core::sorting::DEFAULT_DONATE_SHARE,
            throughput_per_hour: greengrid_core::sorting::DEFAULT_THROUGHPUT_PER_HOUR,
        }
    }
}

impl SortingConfig {
    pub fn model(&self) -> Result<ConfusionModel, ScenarioError> {
        let p_func = self.p_func.to_array();
        let built = match &self.matrix {
            Some(m) => ConfusionModel::new(*m, p_func),
            None => ConfusionModel::uniform_spread(self.recall, p_func),
        };
        built.map_err(|e| {
            invalid(if self.matrix.is_some() { "sorting.matrix" } else { "sorting.recall" }, e.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardsConfig {
    /// One of `none`, `qr-app`, `gamified`, `monetary`, or any name when
    /// `multiplier` is given.
    pub preset: String,
    pub multiplier: Option<f64>,
    pub points: PointTable,
    pub catalog: Vec<MarketplaceItem>,
}

impl Default for RewardsConfig {
    fn default() -> Self {
        RewardsConfig {
            preset: "none".to_string(),
            multiplier: None,
            points: PointTable::default(),
            catalog: default_catalog(),
        }
    }
}

impl RewardsConfig {
    pub fn participation(&self) -> Result<ParticipationPreset, ScenarioError> {
        let preset = match self.multiplier {
            Some(m) => ParticipationPreset::new(self.preset.clone(), m),
            None => ParticipationPreset::builtin(&self.preset),
        };
        preset.map_err(|e| {
            invalid(if self.multiplier.is_some() { "rewards.multiplier" } else { "rewards.preset" }, e.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerConfig {
    pub id: String,
    /// Fraction of deposited devices attributed to this producer.
    pub share: f64,
    pub put_on_market_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceConfig {
    /// Compliance year (1..=5) that day 0 of the run falls in.
    pub start_year: u32,
    pub targets: EprSchedule,
    pub producers: Vec<ProducerConfig>,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        let p = |id: &str, share, pom| ProducerConfig { id: id.to_string(), share, put_on_market_kg: pom };
        ComplianceConfig {
            start_year: 1,
            targets: EprSchedule::default(),
            producers: vec![p("producer-a", 0.4, 2000.0), p("producer-b", 0.3, 500.0), p("producer-c", 0.2, 5000.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerConfig {
    pub replicas: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig { replicas: 5 }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} is outside [0, 1]")))
            }
        };
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} must be positive")))
            }
        };

        let c = &self.citizens;
        unit("citizens.base_propensity", c.base_propensity)?;
        unit("citizens.generation_rate", c.generation_rate)?;
        unit("citizens.mass_jitter", c.mass_jitter)?;
        if c.mass_jitter >= 1.0 {
            return Err(invalid("citizens.mass_jitter", "must be below 1"));
        }
        for cat in DeviceCategory::ALL {
            let w = c.category_mix.get(cat);
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(&format!("citizens.category_mix.{cat}"), format!("{w} must be non-negative")));
            }
        }
        if c.category_mix.to_array().iter().sum::<f64>() <= 0.0 {
            return Err(invalid("citizens.category_mix", "weights sum to zero"));
        }
        if c.deposit_start_hour >= c.deposit_end_hour || c.deposit_end_hour > 24 {
            return Err(invalid("citizens.deposit_end_hour", "deposit hours must satisfy start < end <= 24"));
        }

        if self.bins.count == 0 {
            return Err(invalid("bins.count", "at least one bin is required"));
        }
        positive("bins.plane_km", self.bins.plane_km)?;
        positive("bins.capacity_kg", self.bins.capacity_kg)?;

        let f = &self.fleet;
        if f.trucks == 0 {
            return Err(invalid("fleet.trucks", "at least one truck is required"));
        }
        positive("fleet.capacity_kg", f.capacity_kg)?;
        positive("fleet.speed_kmh", f.speed_kmh)?;
        for (field, v) in [("fleet.depot_x", f.depot_x), ("fleet.depot_y", f.depot_y)] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if f.dispatch_hour >= 24 {
            return Err(invalid("fleet.dispatch_hour", "must be below 24"));
        }
        positive("fuel.liters_per_km", self.fuel.liters_per_km)?;
        positive("fuel.co2_kg_per_liter", self.fuel.co2_kg_per_liter)?;

        let t = &self.telemetry;
        positive("telemetry.threshold", t.threshold)?;
        if t.heartbeat_secs == 0 {
            return Err(invalid("telemetry.heartbeat_secs", "must be positive"));
        }
        t.channel().validate().map_err(|e| invalid("telemetry", e))?;

        self.sorting.model()?;
        unit("sorting.donate_share", self.sorting.donate_share)?;
        positive("sorting.throughput_per_hour", self.sorting.throughput_per_hour)?;

        self.rewards.participation()?;
        for (i, item) in self.rewards.catalog.iter().enumerate() {
            if item.price_points == 0 {
                return Err(invalid(&format!("rewards.catalog[{i}].price_points"), "must be positive"));
            }
        }

        self.impact.validate().map_err(|e| invalid("impact", e.to_string()))?;

        let comp = &self.compliance;
        if !(1..=5).contains(&comp.start_year) {
            return Err(invalid("compliance.start_year", "must be in 1..=5"));
        }
        let mut share = 0.0;
        for (i, p) in comp.producers.iter().enumerate() {
            unit(&format!("compliance.producers[{i}].share"), p.share)?;
            if !p.put_on_market_kg.is_finite() || p.put_on_market_kg < 0.0 {
                return Err(invalid(&format!("compliance.producers[{i}].put_on_market_kg"), "must be non-negative"));
            }
            if p.id.is_empty() {
                return Err(invalid(&format!("compliance.producers[{i}].id"), "must not be empty"));
            }
            share += p.share;
        }
        if share > 1.0 + 1e-9 {
            return Err(invalid("compliance.producers", format!("shares sum to {share}, above 1")));
        }
        if self.ledger.replicas == 0 {
            return Err(invalid("ledger.replicas", "at least one replica is required"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_round_trips() {
        let s = Scenario::default();
        s.validate().unwrap();
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let s = Scenario::from_toml_str("seed = 7\n[citizens]\ncount = 12\n").unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.citizens.count, 12);
        assert_eq!(s.citizens.base_propensity, 0.10);
        assert_eq!(s.bins, BinConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[bins]\ncapacity_kg = -1.0\n", "bins.capacity_kg"),
            ("[citizens]\nbase_propensity = 1.5\n", "citizens.base_propensity"),
            ("[rewards]\npreset = \"lottery\"\n", "rewards.preset"),
            ("[rewards]\npreset = \"x\"\nmultiplier = 0.0\n", "rewards.multiplier"),
            ("[telemetry]\np_loss = 1.0\n", "telemetry"),
            ("[fleet]\ntrucks = 0\n", "fleet.trucks"),
            ("[sorting]\nmatrix = [[1.0,0,0,0],[0,1.0,0,0],[0,0,0.5,0],[0,0,0,1.0]]\n", "sorting.matrix"),
        ];
        for (text, field) in cases {
            match Scenario::from_toml_str(text) {
                Err(ScenarioError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(Scenario::from_toml_str("[bins]\ncolour = 3\n"), Err(ScenarioError::Parse(_))));
    }
}
