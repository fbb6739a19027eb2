//! E-waste chain-of-custody and collection orchestration.

pub mod compliance;
pub mod impact;
pub mod ledger;
pub mod model;
pub mod rewards;
pub mod routing;
pub mod sorting;
pub mod telemetry;
