//! HTTP transport over [`ApiService`]. Routes only parse and forward.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::service::{parse, ApiRequest, ApiService};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

type Shared = Arc<ApiService>;
type QueryMap = Query<BTreeMap<String, String>>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self }))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get("authorization")?.to_str().ok()?.strip_prefix("Bearer ").map(str::trim)
}

fn json_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_field("body", format!("malformed JSON: {e}")))
}

/// Authenticates, then runs the request built by `build`.
fn handle(
    svc: &ApiService,
    headers: &HeaderMap,
    build: impl FnOnce() -> Result<ApiRequest, ApiError>,
) -> Result<Json<Value>, ApiError> {
    let session = svc.authenticate(bearer(headers))?;
    let request = build()?;
    let key = headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok());
    svc.call(session, request, key).map(Json)
}

async fn confirm_deposit(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::ConfirmDeposit(parse::deposit(&json_body(&body)?)?)))
}

async fn ingest(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::IngestTelemetry(parse::telemetry(&json_body(&body)?)?)))
}

async fn dashboard(State(svc): State<Shared>, headers: HeaderMap, Query(q): QueryMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::DashboardMetrics(parse::dashboard(&q)?)))
}

async fn audit(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(producer): Path<String>,
    Query(q): QueryMap,
) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::AuditProducer { producer, year: parse::year(&q)? }))
}

async fn wallet(State(svc): State<Shared>, headers: HeaderMap, Query(q): QueryMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Wallet { page: parse::page(&q)? }))
}

async fn marketplace(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(q): QueryMap,
) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Marketplace { page: parse::page(&q)? }))
}

async fn redeem(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Redeem { item_id: parse::redeem(&json_body(&body)?)? }))
}

async fn leaderboard(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(q): QueryMap,
) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || {
        Ok(ApiRequest::Leaderboard {
            by_region: parse::group_by_region(&q)?,
            window: parse::window(&q)?,
            page: parse::page(&q)?,
        })
    })
}

async fn bins(State(svc): State<Shared>, headers: HeaderMap, Query(q): QueryMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Bins { page: parse::page(&q)? }))
}

async fn ledger_events(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(q): QueryMap,
) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::LedgerEvents { page: parse::page(&q)? }))
}

async fn ledger_verify(State(svc): State<Shared>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::LedgerVerify))
}

async fn trace(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(device_id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::DeviceTrace { device_id }))
}

async fn projection(State(svc): State<Shared>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Projection))
}

async fn snapshot(State(svc): State<Shared>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    handle(&svc, &headers, || Ok(ApiRequest::Snapshot))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/deposits", post(confirm_deposit))
        .route("/v1/telemetry", post(ingest))
        .route("/v1/dashboard", get(dashboard))
        .route("/v1/audit/{producer}", get(audit))
        .route("/v1/wallet", get(wallet))
        .route("/v1/marketplace", get(marketplace))
        .route("/v1/marketplace/redeem", post(redeem))
        .route("/v1/leaderboard", get(leaderboard))
        .route("/v1/bins", get(bins))
        .route("/v1/ledger/events", get(ledger_events))
        .route("/v1/ledger/verify", get(ledger_verify))
        .route("/v1/devices/{device_id}/trace", get(trace))
        .route("/v1/projection", get(projection))
        .route("/v1/admin/snapshot", post(snapshot))
        .fallback(not_found)
        .with_state(service)
}

/// Serves until ctrl-c, then saves state when a state directory is set.
pub async fn serve(service: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown()).await
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
}
