//! Shared domain vocabulary: device categories, tagged devices and their
//! custody stages, actors, and positions on the simulation plane.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("device mass must be positive, got {0} kg")]
    NonPositiveMass(f64),
    #[error("illegal stage transition {from} -> {to}")]
    IllegalTransition { from: Stage, to: Stage },
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("unknown device category {0:?}")]
    UnknownCategory(String),
    #[error("unknown actor role {0:?}")]
    UnknownRole(String),
    #[error("duplicate actor {0}")]
    DuplicateActor(ActorId),
    #[error("invalid location: {0}")]
    InvalidLocation(String),
}

/// The four device classes the sorting line recognises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceCategory {
    Smartphone,
    LaptopTablet,
    Battery,
    CircuitBoard,
}

impl DeviceCategory {
    pub const ALL: [DeviceCategory; 4] = [
        DeviceCategory::Smartphone,
        DeviceCategory::LaptopTablet,
        DeviceCategory::Battery,
        DeviceCategory::CircuitBoard,
    ];

    /// Row/column position used by the confusion model and per-category tables.
    pub fn index(self) -> usize {
        match self {
            DeviceCategory::Smartphone => 0,
            DeviceCategory::LaptopTablet => 1,
            DeviceCategory::Battery => 2,
            DeviceCategory::CircuitBoard => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn default_mass_kg(self) -> f64 {
        match self {
            DeviceCategory::Smartphone => 0.2,
            DeviceCategory::LaptopTablet => 2.0,
            DeviceCategory::Battery => 0.05,
            DeviceCategory::CircuitBoard => 0.1,
        }
    }

    pub fn default_points(self) -> u64 {
        match self {
            DeviceCategory::Smartphone => 10,
            DeviceCategory::LaptopTablet => 25,
            DeviceCategory::Battery => 5,
            DeviceCategory::CircuitBoard => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceCategory::Smartphone => "smartphone",
            DeviceCategory::LaptopTablet => "laptop_tablet",
            DeviceCategory::Battery => "battery",
            DeviceCategory::CircuitBoard => "circuit_board",
        }
    }
}

impl fmt::Display for DeviceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceCategory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smartphone" | "phone" => Ok(DeviceCategory::Smartphone),
            "laptop_tablet" | "laptop" | "tablet" | "laptoptablet" => Ok(DeviceCategory::LaptopTablet),
            "battery" => Ok(DeviceCategory::Battery),
            "circuit_board" | "circuitboard" | "pcb" => Ok(DeviceCategory::CircuitBoard),
            _ => Err(ModelError::UnknownCategory(s.to_string())),
        }
    }
}

/// Per-category table, indexed by [`DeviceCategory::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable<T> {
    pub smartphone: T,
    pub laptop_tablet: T,
    pub battery: T,
    pub circuit_board: T,
}

impl<T: Copy> CategoryTable<T> {
    pub fn get(&self, category: DeviceCategory) -> T {
        match category {
            DeviceCategory::Smartphone => self.smartphone,
            DeviceCategory::LaptopTablet => self.laptop_tablet,
            DeviceCategory::Battery => self.battery,
            DeviceCategory::CircuitBoard => self.circuit_board,
        }
    }

    pub fn from_fn(mut f: impl FnMut(DeviceCategory) -> T) -> Self {
        CategoryTable {
            smartphone: f(DeviceCategory::Smartphone),
            laptop_tablet: f(DeviceCategory::LaptopTablet),
            battery: f(DeviceCategory::Battery),
            circuit_board: f(DeviceCategory::CircuitBoard),
        }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.smartphone, self.laptop_tablet, self.battery, self.circuit_board]
    }
}

pub type PointTable = CategoryTable<u64>;
pub type MassTable = CategoryTable<f64>;

impl Default for PointTable {
    fn default() -> Self {
        CategoryTable::from_fn(DeviceCategory::default_points)
    }
}

impl Default for MassTable {
    fn default() -> Self {
        CategoryTable::from_fn(DeviceCategory::default_mass_kg)
    }
}

/// Custody stage of a single device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Registered,
    Deposited,
    InTransit,
    AtRecycler,
    Refurbished,
    MaterialRecovered,
    Donated,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Registered,
        Stage::Deposited,
        Stage::InTransit,
        Stage::AtRecycler,
        Stage::Refurbished,
        Stage::MaterialRecovered,
        Stage::Donated,
    ];

    /// Legal next stages. Terminal stages have none.
    pub fn successors(self) -> &'static [Stage] {
        match self {
            Stage::Registered => &[Stage::Deposited],
            Stage::Deposited => &[Stage::InTransit],
            Stage::InTransit => &[Stage::AtRecycler],
            Stage::AtRecycler => &[Stage::Refurbished, Stage::MaterialRecovered, Stage::Donated],
            Stage::Refurbished | Stage::MaterialRecovered | Stage::Donated => &[],
        }
    }

    pub fn can_advance_to(self, next: Stage) -> bool {
        self.successors().contains(&next)
    }

    pub fn is_terminal(self) -> bool {
        self.successors().is_empty()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(
    /// Opaque device tag, standing in for a QR/NFC label.
    DeviceId
);
string_id!(ActorId);
string_id!(RegionId);
string_id!(BinId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Citizen,
    Collector,
    Recycler,
    Producer,
    Regulator,
}

impl FromStr for Role {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "citizen" => Ok(Role::Citizen),
            "collector" => Ok(Role::Collector),
            "recycler" => Ok(Role::Recycler),
            "producer" => Ok(Role::Producer),
            "regulator" => Ok(Role::Regulator),
            _ => Err(ModelError::UnknownRole(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: ActorId,
    pub role: Role,
    pub region: RegionId,
}

/// Planar position in kilometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
    pub region: RegionId,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64, region: impl Into<String>) -> Result<Self, ModelError> {
        let p = GeoPoint { x, y, region: RegionId(region.into()) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(ModelError::InvalidLocation(format!("non-finite coordinates ({}, {})", self.x, self.y)));
        }
        if self.region.0.is_empty() {
            return Err(ModelError::InvalidLocation("empty region".into()));
        }
        Ok(())
    }

    pub fn distance_km(&self, other: &GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: DeviceId,
    pub category: DeviceCategory,
    pub mass_kg: f64,
    pub functional: Option<bool>,
    pub stage: Stage,
    /// Producer the device is attributed to for take-back obligations.
    pub producer: Option<ActorId>,
    /// Region of the bin the device was deposited in.
    #[serde(default)]
    pub region: Option<RegionId>,
}

impl DeviceRecord {
    /// Moves the device to `next` if it is the legal successor of the current stage.
    pub fn advance_stage(&mut self, next: Stage) -> Result<(), ModelError> {
        if !self.stage.can_advance_to(next) {
            return Err(ModelError::IllegalTransition { from: self.stage, to: next });
        }
        self.stage = next;
        Ok(())
    }

    /// Mass in integer milligrams, the unit all conservation ledgers use.
    pub fn mass_mg(&self) -> u64 {
        kg_to_mg(self.mass_kg)
    }
}

pub fn kg_to_mg(kg: f64) -> u64 {
    (kg * 1e6).round() as u64
}

pub fn mg_to_kg(mg: u64) -> f64 {
    mg as f64 / 1e6
}

/// Device registry. Ids are issued from a monotone counter, so they never repeat.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DeviceRegistry {
    next_serial: u64,
    devices: BTreeMap<DeviceId, DeviceRecord>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_device(&mut self, category: DeviceCategory, mass_kg: f64) -> Result<DeviceRecord, ModelError> {
        self.register_with_producer(category, mass_kg, None)
    }

    pub fn register_with_producer(
        &mut self,
        category: DeviceCategory,
        mass_kg: f64,
        producer: Option<ActorId>,
    ) -> Result<DeviceRecord, ModelError> {
        // `!(x > 0)` also rejects NaN
        if !mass_kg.is_finite() || mass_kg <= 0.0 {
            return Err(ModelError::NonPositiveMass(mass_kg));
        }
        let device_id = DeviceId(format!("dev-{:08}", self.next_serial));
        self.next_serial += 1;
        let record = DeviceRecord {
            device_id: device_id.clone(),
            category,
            mass_kg,
            functional: None,
            stage: Stage::Registered,
            producer,
            region: None,
        };
        self.devices.insert(device_id, record.clone());
        Ok(record)
    }

    pub fn advance_stage(&mut self, id: &DeviceId, next: Stage) -> Result<&DeviceRecord, ModelError> {
        let device = self.devices.get_mut(id).ok_or_else(|| ModelError::UnknownDevice(id.clone()))?;
        device.advance_stage(next)?;
        Ok(device)
    }

    pub fn set_region(&mut self, id: &DeviceId, region: RegionId) -> Result<(), ModelError> {
        let device = self.devices.get_mut(id).ok_or_else(|| ModelError::UnknownDevice(id.clone()))?;
        device.region = Some(region);
        Ok(())
    }

    pub fn set_functional(&mut self, id: &DeviceId, functional: bool) -> Result<(), ModelError> {
        let device = self.devices.get_mut(id).ok_or_else(|| ModelError::UnknownDevice(id.clone()))?;
        device.functional = Some(functional);
        Ok(())
    }

    pub fn get(&self, id: &DeviceId) -> Option<&DeviceRecord> {
        self.devices.get(id)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    /// Total mass per stage in milligrams.
    pub fn mass_by_stage(&self) -> BTreeMap<Stage, u64> {
        let mut out: BTreeMap<Stage, u64> = Stage::ALL.iter().map(|s| (*s, 0)).collect();
        for d in self.devices.values() {
            *out.entry(d.stage).or_default() += d.mass_mg();
        }
        out
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ActorDirectory {
    actors: BTreeMap<ActorId, Actor>,
}

impl ActorDirectory {
    pub fn insert(&mut self, actor: Actor) -> Result<(), ModelError> {
        if self.actors.contains_key(&actor.actor_id) {
            return Err(ModelError::DuplicateActor(actor.actor_id));
        }
        self.actors.insert(actor.actor_id.clone(), actor);
        Ok(())
    }

    pub fn get(&self, id: &ActorId) -> Option<&Actor> {
        self.actors.get(id)
    }

    pub fn contains(&self, id: &ActorId) -> bool {
        self.actors.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values()
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(move |a| a.role == role)
    }

    pub fn len(&self) -> usize {
        self.actors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actors.is_empty()
    }
}
