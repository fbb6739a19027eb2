//! Service surface of the platform: deposits, telemetry, wallets and the
//! marketplace for citizens, dashboards and audits for regulators.

pub mod auth;
pub mod error;
pub mod http;
pub mod service;

pub use auth::{allowed, ApiSession, AuthConfig, Endpoint, CAPABILITIES};
pub use error::{ApiError, ErrorCode};
pub use service::{ApiRequest, ApiService};
