//! Bearer tokens, sessions and the role capability table.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use greengrid_core::model::{ActorDirectory, ActorId, Role};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    ConfirmDeposit,
    IngestTelemetry,
    DashboardMetrics,
    AuditProducer,
    Wallet,
    Marketplace,
    Redeem,
    Leaderboard,
    Bins,
    LedgerEvents,
    LedgerVerify,
    DeviceTrace,
    Projection,
    Snapshot,
}

impl Endpoint {
    pub const ALL: [Endpoint; 14] = [
        Endpoint::ConfirmDeposit,
        Endpoint::IngestTelemetry,
        Endpoint::DashboardMetrics,
        Endpoint::AuditProducer,
        Endpoint::Wallet,
        Endpoint::Marketplace,
        Endpoint::Redeem,
        Endpoint::Leaderboard,
        Endpoint::Bins,
        Endpoint::LedgerEvents,
        Endpoint::LedgerVerify,
        Endpoint::DeviceTrace,
        Endpoint::Projection,
        Endpoint::Snapshot,
    ];

    /// Whether the endpoint changes state and therefore honours idempotency keys.
    pub fn is_mutating(self) -> bool {
        matches!(self, Endpoint::ConfirmDeposit | Endpoint::IngestTelemetry | Endpoint::Redeem | Endpoint::Snapshot)
    }
}

pub const ALL_ROLES: [Role; 5] = [Role::Citizen, Role::Collector, Role::Recycler, Role::Producer, Role::Regulator];

/// Which roles may call which endpoint. Citizens act only on their own
/// wallet; regulators read everything but cannot touch wallets.
pub const CAPABILITIES: [(Endpoint, &[Role]); 14] = [
    (Endpoint::ConfirmDeposit, &[Role::Citizen]),
    (Endpoint::IngestTelemetry, &[Role::Collector]),
    (Endpoint::DashboardMetrics, &[Role::Regulator]),
    (Endpoint::AuditProducer, &[Role::Regulator]),
    (Endpoint::Wallet, &[Role::Citizen]),
    (Endpoint::Marketplace, &ALL_ROLES),
    (Endpoint::Redeem, &[Role::Citizen]),
    (Endpoint::Leaderboard, &ALL_ROLES),
    (Endpoint::Bins, &ALL_ROLES),
    (Endpoint::LedgerEvents, &[Role::Recycler, Role::Regulator]),
    (Endpoint::LedgerVerify, &[Role::Recycler, Role::Producer, Role::Regulator]),
    (Endpoint::DeviceTrace, &[Role::Recycler, Role::Regulator]),
    (Endpoint::Projection, &ALL_ROLES),
    (Endpoint::Snapshot, &[Role::Regulator]),
];

pub fn allowed(role: Role, endpoint: Endpoint) -> bool {
    CAPABILITIES.iter().any(|(e, roles)| *e == endpoint && roles.contains(&role))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSession {
    pub actor: ActorId,
    pub role: Role,
    pub capabilities: BTreeSet<Endpoint>,
}

impl ApiSession {
    pub fn new(actor: ActorId, role: Role) -> Self {
        let capabilities = Endpoint::ALL.into_iter().filter(|e| allowed(role, *e)).collect();
        ApiSession { actor, role, capabilities }
    }

    pub fn require(&self, endpoint: Endpoint) -> Result<(), ApiError> {
        if self.capabilities.contains(&endpoint) {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("role {:?} may not call {endpoint:?}", self.role)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: String,
    pub actor: String,
    pub role: Role,
}

/// Static token map, loaded from a TOML file of `[[tokens]]` tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthConfig {
    pub tokens: Vec<TokenEntry>,
}

impl AuthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text)
    }

    /// One token per actor, `<actor id>-token`; for local runs and tests.
    pub fn demo(actors: &ActorDirectory) -> Self {
        let tokens = actors
            .iter()
            .map(|a| TokenEntry { token: format!("{}-token", a.actor_id), actor: a.actor_id.to_string(), role: a.role })
            .collect();
        AuthConfig { tokens }
    }

    /// Checks every token against the actor directory and builds the lookup.
    pub fn sessions(&self, actors: &ActorDirectory) -> Result<BTreeMap<String, ApiSession>, String> {
        let mut out = BTreeMap::new();
        for t in &self.tokens {
            let id = ActorId::new(t.actor.clone());
            match actors.get(&id) {
                Some(a) if a.role == t.role => {}
                Some(a) => {
                    return Err(format!("token for {} claims role {:?}, actor is {:?}", t.actor, t.role, a.role))
                }
                None => return Err(format!("token for unknown actor {}", t.actor)),
            }
            if out.insert(t.token.clone(), ApiSession::new(id, t.role)).is_some() {
                return Err(format!("duplicate token for {}", t.actor));
            }
        }
        Ok(out)
    }
}
