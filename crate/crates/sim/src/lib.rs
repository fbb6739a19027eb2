//! Deterministic discrete-event simulation of a city running the full
//! collection pipeline, from deposits to certificates.

pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod streams;
pub mod world;

pub use engine::{compare_presets, run, PresetRow, RunOutput};
pub use metrics::{DayMetrics, MetricsReport, Summary};
pub use scenario::{Scenario, ScenarioError};
pub use world::{World, WorldError, WorldSnapshot};
