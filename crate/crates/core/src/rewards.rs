//! Green Points: ledger-confirmed deposit credits, wallets, the marketplace,
//! leaderboards, and participation presets for scenario runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{keys, CustodyEvent, EventDraft, EventKind, LedgerCluster, LedgerError, TimeWindow};
use crate::model::{ActorId, DeviceCategory, PointTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardsError {
    #[error("no ledger event at seq {0}")]
    UnknownDeposit(u64),
    #[error("ledger event {seq} is {kind}, not a Deposit")]
    NotADeposit { seq: u64, kind: EventKind },
    #[error("deposit {0} was already credited")]
    AlreadyCredited(u64),
    #[error("deposit {seq} is missing payload field {key}")]
    MissingPayload { seq: u64, key: &'static str },
    #[error("balance {balance} is below the price {price}")]
    InsufficientBalance { balance: u64, price: u64 },
    #[error("item {0} is out of stock")]
    OutOfStock(String),
    #[error("no catalog item {0}")]
    UnknownItem(String),
    #[error("preset multiplier must be positive, got {0}")]
    InvalidMultiplier(f64),
    #[error("unknown preset {0}")]
    UnknownPreset(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntryRef {
    Credit { deposit_seq: u64, credit_seq: u64 },
    Redemption { receipt_id: u64, item_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletEntry {
    pub reference: EntryRef,
    pub delta: i64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenWallet {
    pub owner: ActorId,
    pub balance: u64,
    pub history: Vec<WalletEntry>,
}

impl GreenWallet {
    pub fn new(owner: ActorId) -> Self {
        GreenWallet { owner, balance: 0, history: Vec::new() }
    }

    pub fn credited_points(&self) -> u64 {
        self.history.iter().filter(|e| e.delta > 0).map(|e| e.delta as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    RefurbishedDevice,
    Voucher,
    TreePlanting,
    Donation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketplaceItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub title: String,
    pub price_points: u64,
    pub stock: u64,
}

/// One item per kind.
pub fn default_catalog() -> Vec<MarketplaceItem> {
    let item = |id: &str, kind, title: &str, price, stock| MarketplaceItem {
        item_id: id.to_string(),
        kind,
        title: title.to_string(),
        price_points: price,
        stock,
    };
    vec![
        item("refurb-phone", ItemKind::RefurbishedDevice, "Refurbished smartphone", 400, 20),
        item("voucher-100", ItemKind::Voucher, "Store voucher", 100, 500),
        item("tree-1", ItemKind::TreePlanting, "Plant a tree", 50, 10_000),
        item("school-donation", ItemKind::Donation, "Donate to a school laptop drive", 30, 10_000),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub receipt_id: u64,
    pub citizen: ActorId,
    pub item_id: String,
    pub price_points: u64,
    pub timestamp: u64,
    pub balance_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Credit {
    pub points: u64,
    pub balance: u64,
    pub event: CustodyEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardsEngine {
    pub points: PointTable,
    wallets: BTreeMap<ActorId, GreenWallet>,
    catalog: BTreeMap<String, MarketplaceItem>,
    /// Deposit seq -> PointsCredited seq.
    credited: BTreeMap<u64, u64>,
    receipts: Vec<Receipt>,
    spent: u64,
}

impl RewardsEngine {
    pub fn new(points: PointTable, catalog: Vec<MarketplaceItem>) -> Self {
        RewardsEngine {
            points,
            wallets: BTreeMap::new(),
            catalog: catalog.into_iter().map(|i| (i.item_id.clone(), i)).collect(),
            credited: BTreeMap::new(),
            receipts: Vec::new(),
            spent: 0,
        }
    }

    pub fn wallet(&self, citizen: &ActorId) -> Option<&GreenWallet> {
        self.wallets.get(citizen)
    }

    pub fn wallets(&self) -> impl Iterator<Item = &GreenWallet> {
        self.wallets.values()
    }

    pub fn balance(&self, citizen: &ActorId) -> u64 {
        self.wallets.get(citizen).map_or(0, |w| w.balance)
    }

    pub fn catalog(&self) -> impl Iterator<Item = &MarketplaceItem> {
        self.catalog.values()
    }

    pub fn item(&self, item_id: &str) -> Option<&MarketplaceItem> {
        self.catalog.get(item_id)
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn is_credited(&self, deposit_seq: u64) -> bool {
        self.credited.contains_key(&deposit_seq)
    }

    pub fn total_balances(&self) -> u64 {
        self.wallets.values().map(|w| w.balance).sum()
    }

    pub fn total_spent(&self) -> u64 {
        self.spent
    }

    /// Credits the citizen named on the Deposit event at `deposit_seq`, once.
    pub fn credit_on_deposit(
        &mut self,
        ledger: &mut LedgerCluster,
        deposit_seq: u64,
        timestamp: u64,
    ) -> Result<Credit, RewardsError> {
        let deposit = ledger.get(deposit_seq).ok_or(RewardsError::UnknownDeposit(deposit_seq))?.clone();
        if deposit.event_kind != EventKind::Deposit {
            return Err(RewardsError::NotADeposit { seq: deposit_seq, kind: deposit.event_kind });
        }
        if self.credited.contains_key(&deposit_seq) {
            return Err(RewardsError::AlreadyCredited(deposit_seq));
        }
        let field = |key: &'static str| {
            deposit.payload_value(key).ok_or(RewardsError::MissingPayload { seq: deposit_seq, key })
        };
        let citizen = ActorId::new(field(keys::CITIZEN)?);
        let category: DeviceCategory = field(keys::CATEGORY)?
            .parse()
            .map_err(|_| RewardsError::MissingPayload { seq: deposit_seq, key: keys::CATEGORY })?;
        let points = self.points.get(category);

        let mut draft = EventDraft::new(
            EventKind::PointsCredited,
            deposit.device_id.clone(),
            deposit.location.clone(),
            timestamp,
            0.0,
            citizen.clone(),
        )
        .with(keys::CITIZEN, &citizen)
        .with(keys::DEPOSIT_SEQ, deposit_seq)
        .with(keys::POINTS, points)
        .with(keys::CATEGORY, category);
        if let Some(region) = deposit.payload_value(keys::REGION) {
            draft = draft.with(keys::REGION, region);
        }
        let event = ledger.append(draft)?;
        self.credited.insert(deposit_seq, event.seq);
        let wallet = self.wallets.entry(citizen.clone()).or_insert_with(|| GreenWallet::new(citizen));
        wallet.balance += points;
        wallet.history.push(WalletEntry {
            reference: EntryRef::Credit { deposit_seq, credit_seq: event.seq },
            delta: points as i64,
            timestamp,
        });
        Ok(Credit { points, balance: wallet.balance, event })
    }

    /// Spends points on one unit of an item. Nothing changes on error.
    pub fn redeem(&mut self, citizen: &ActorId, item_id: &str, timestamp: u64) -> Result<Receipt, RewardsError> {
        let item = self.catalog.get(item_id).ok_or_else(|| RewardsError::UnknownItem(item_id.to_string()))?;
        let balance = self.balance(citizen);
        if balance < item.price_points {
            return Err(RewardsError::InsufficientBalance { balance, price: item.price_points });
        }
        if item.stock == 0 {
            return Err(RewardsError::OutOfStock(item_id.to_string()));
        }
        let price = item.price_points;
        self.catalog.get_mut(item_id).expect("checked above").stock -= 1;
        let receipt_id = self.receipts.len() as u64;
        let wallet = self.wallets.get_mut(citizen).expect("positive balance implies a wallet");
        wallet.balance -= price;
        wallet.history.push(WalletEntry {
            reference: EntryRef::Redemption { receipt_id, item_id: item_id.to_string() },
            delta: -(price as i64),
            timestamp,
        });
        self.spent += price;
        let receipt = Receipt {
            receipt_id,
            citizen: citizen.clone(),
            item_id: item_id.to_string(),
            price_points: price,
            timestamp,
            balance_after: wallet.balance,
        };
        self.receipts.push(receipt.clone());
        Ok(receipt)
    }
}

/// Sum of `points` over all PointsCredited events.
pub fn ledger_credited_points<E: AsRef<CustodyEvent>>(events: &[E]) -> u64 {
    events
        .iter()
        .map(AsRef::as_ref)
        .filter(|e| e.event_kind == EventKind::PointsCredited)
        .filter_map(|e| e.payload_value(keys::POINTS)?.parse::<u64>().ok())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Region,
    Citizen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub group: String,
    pub points: u64,
}

/// Credited points per group in `window`, highest first, ties by group id.
pub fn leaderboard<E: AsRef<CustodyEvent>>(events: &[E], by: GroupBy, window: TimeWindow) -> Vec<LeaderboardRow> {
    let key = match by {
        GroupBy::Region => keys::REGION,
        GroupBy::Citizen => keys::CITIZEN,
    };
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for e in events.iter().map(AsRef::as_ref) {
        if e.event_kind != EventKind::PointsCredited || !window.contains(e.timestamp) {
            continue;
        }
        let (Some(group), Some(points)) = (e.payload_value(key), e.payload_value(keys::POINTS)) else {
            continue;
        };
        *totals.entry(group.to_string()).or_default() += points.parse::<u64>().unwrap_or(0);
    }
    let mut rows: Vec<LeaderboardRow> =
        totals.into_iter().map(|(group, points)| LeaderboardRow { group, points }).collect();
    // stable sort keeps the BTreeMap's ascending id order among ties
    rows.sort_by_key(|r| std::cmp::Reverse(r.points));
    rows
}

/// Scales every citizen's daily deposit propensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationPreset {
    pub name: String,
    pub multiplier: f64,
}

impl ParticipationPreset {
    pub fn new(name: impl Into<String>, multiplier: f64) -> Result<Self, RewardsError> {
        if !multiplier.is_finite() || multiplier <= 0.0 {
            return Err(RewardsError::InvalidMultiplier(multiplier));
        }
        Ok(ParticipationPreset { name: name.into(), multiplier })
    }

    /// `none` (×1.00), `qr-app` (×1.17), `gamified` (×1.40), `monetary` (×3.30).
    pub fn builtin(name: &str) -> Result<Self, RewardsError> {
        let multiplier = match name {
            "none" => 1.0,
            "qr-app" => 1.17,
            "gamified" => 1.40,
            "monetary" => 3.30,
            _ => return Err(RewardsError::UnknownPreset(name.to_string())),
        };
        Self::new(name, multiplier)
    }

    pub fn builtin_names() -> [&'static str; 4] {
        ["none", "qr-app", "gamified", "monetary"]
    }

    pub fn adjust(&self, base: f64) -> f64 {
        (base * self.multiplier).clamp(0.0, 1.0)
    }
}

pub fn apply_preset(propensities: &[f64], preset: &ParticipationPreset) -> Vec<f64> {
    propensities.iter().map(|p| preset.adjust(*p)).collect()
}

/// Distinct citizens with credited points, for dashboard counts.
pub fn credited_citizens<E: AsRef<CustodyEvent>>(events: &[E]) -> BTreeSet<String> {
    events
        .iter()
        .map(AsRef::as_ref)
        .filter(|e| e.event_kind == EventKind::PointsCredited)
        .filter_map(|e| e.payload_value(keys::CITIZEN).map(str::to_string))
        .collect()
}
