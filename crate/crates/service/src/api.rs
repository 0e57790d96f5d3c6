//! HTTP/JSON interface consumed by the operator dashboard.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ransec_core::agents::{RetrievalMode, TriggerKind};
use ransec_core::digest::sha256_hex;
use ransec_core::enforcement::{EnforcementError, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{Engine, EngineError, RunRecord, RunState};

pub const OPERATOR_TOKEN_HEADER: &str = "x-operator-token";

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// When set, every POST must carry it in [`OPERATOR_TOKEN_HEADER`].
    pub operator_token: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadRequest,
    Unauthorized,
    NotFound,
    Conflict,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub correlation_id: String,
}

static ERRORS: AtomicU64 = AtomicU64::new(0);

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        let n = ERRORS.fetch_add(1, Ordering::Relaxed);
        let message = message.into();
        let correlation_id = sha256_hex(format!("{}\n{n}\n{message}", chrono::Utc::now().to_rfc3339()))[..16].to_string();
        Self { code, message, correlation_id }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::BadRequest(_) | EngineError::NoChatBackend => ErrorCode::BadRequest,
            EngineError::NotFound(_) => ErrorCode::NotFound,
            EngineError::RunInFlight { .. } => ErrorCode::Conflict,
            EngineError::Enforcement(inner) => match inner {
                EnforcementError::UnknownAction(_) => ErrorCode::NotFound,
                EnforcementError::DuplicateInFlight { .. }
                | EnforcementError::InvalidTransition { .. }
                | EnforcementError::PolicyViolation(_)
                | EnforcementError::NoSafeSnapshot(_)
                | EnforcementError::NothingToApply(_) => ErrorCode::Conflict,
                _ => ErrorCode::Internal,
            },
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(correlation_id = %self.correlation_id, message = %self.message, "request failed");
        } else {
            tracing::warn!(correlation_id = %self.correlation_id, code = ?self.code, message = %self.message, "request refused");
        }
        (self.code.status(), Json(self)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// Serializes `value` with a content-derived ETag; a matching If-None-Match gets 304.
fn cached_body(headers: &HeaderMap, body: Vec<u8>, content_type: &'static str) -> Response {
    let etag = format!("\"{}\"", sha256_hex(&body));
    let etag_value = HeaderValue::from_str(&etag).expect("hex etag is a valid header");
    if headers.get(header::IF_NONE_MATCH).and_then(|v| v.to_str().ok()).is_some_and(|v| v.split(',').any(|t| t.trim() == etag)) {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value)]).into_response();
    }
    (StatusCode::OK, [(header::ETAG, etag_value), (header::CONTENT_TYPE, HeaderValue::from_static(content_type))], body).into_response()
}

fn cached_json(headers: &HeaderMap, value: &impl Serialize) -> Response {
    let body = serde_json::to_vec_pretty(value).expect("response serializes");
    cached_body(headers, body, "application/json")
}

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.operator_token else { return Ok(()) };
    match headers.get(OPERATOR_TOKEN_HEADER).and_then(|v| v.to_str().ok()) {
        Some(given) if given == expected => Ok(()),
        _ => Err(ApiError::new(ErrorCode::Unauthorized, "missing or wrong operator token")),
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, EngineError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(ErrorCode::Internal, format!("worker failed: {e}"))),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/inventory", get(inventory))
        .route("/assessments", post(submit_assessment))
        .route("/assessments/{id}", get(get_assessment))
        .route("/actions/pending", get(pending_actions))
        .route("/actions/{id}", get(get_action))
        .route("/actions/{id}/approve", post(approve))
        .route("/actions/{id}/reject", post(reject))
        .route("/components", get(components))
        .route("/components/{id}/rollback", post(rollback))
        .route("/history", get(history))
        .route("/reports/{id}", get(report))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> ApiResult {
    let engine = state.engine.clone();
    let intact = blocking(move || Ok(engine.audit_intact())).await?;
    let code = if intact { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    Ok((code, Json(json!({"status": if intact { "ok" } else { "degraded" }, "audit_chain": if intact { "intact" } else { "broken" }}))).into_response())
}

async fn inventory(State(state): State<AppState>, headers: HeaderMap) -> ApiResult {
    let engine = state.engine.clone();
    let value = blocking(move || {
        let c = engine.config();
        Ok(json!({
            "components": c.components,
            "default_mode": c.default_mode,
            "knowledge_chunks": engine.knowledge_len(),
            "policy_sources": c.policy_sources.iter().map(|s| &s.source_id).collect::<Vec<_>>(),
            "correlation_rules": c.correlation_rules.iter().map(|r| &r.rule_id).collect::<Vec<_>>(),
            "enforcement": c.enforcement,
        }))
    })
    .await?;
    Ok(cached_json(&headers, &value))
}

#[derive(Debug, Deserialize)]
pub struct AssessmentRequest {
    pub component_id: String,
    pub config_text: String,
    #[serde(default)]
    pub mode: Option<RetrievalMode>,
}

async fn submit_assessment(State(state): State<AppState>, headers: HeaderMap, body: Result<Json<AssessmentRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    authorize(&state, &headers)?;
    let Json(req) = body.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    let engine = state.engine.clone();
    let run_id = blocking(move || engine.submit(&req.component_id, &req.config_text, req.mode, TriggerKind::CodeSubmission, None)).await?;
    let engine = state.engine.clone();
    let id = run_id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = engine.execute(&id) {
            tracing::error!(run = %id, error = %e, "run could not be recorded");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"run_id": run_id, "state": RunState::Running}))).into_response())
}

fn run_view(run: &RunRecord) -> Value {
    let outcome = run.outcome.as_ref();
    json!({
        "run_id": run.run_id,
        "component_id": run.component_id,
        "trigger": run.trigger,
        "mode": run.mode,
        "state": run.state,
        "submitted_at": run.submitted_at,
        "completed_at": run.completed_at,
        "status": outcome.map(|o| o.final_report.status),
        "loop_status": outcome.map(|o| o.outcome),
        "iterations_used": outcome.map(|o| o.iterations_used),
        "latency_secs": outcome.map(|o| o.total_latency.as_secs_f64()),
        "violations": outcome.map(|o| o.final_report.violation_paths()),
        "report": outcome.map(|o| &o.final_report),
        "action_id": run.action_id,
        "error": run.error,
    })
}

async fn get_assessment(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let run = state.engine.run(&id).ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("run {id}")))?;
    Ok(cached_json(&headers, &run_view(&run)))
}

async fn pending_actions(State(state): State<AppState>, headers: HeaderMap) -> ApiResult {
    let engine = state.engine.clone();
    let views = blocking(move || Ok(engine.pending())).await?;
    Ok(cached_json(&headers, &views))
}

async fn get_action(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let view = state.engine.action(&id).ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("action {id}")))?;
    Ok(cached_json(&headers, &view))
}

#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    pub operator: String,
}

async fn decide(state: AppState, headers: HeaderMap, id: String, verdict: Verdict, body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    authorize(&state, &headers)?;
    let Json(req) = body.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    let engine = state.engine.clone();
    let view = blocking(move || engine.decide(&id, verdict, &req.operator)).await?;
    Ok(Json(view).into_response())
}

async fn approve(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    decide(state, headers, id, Verdict::Approve, body).await
}

async fn reject(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    decide(state, headers, id, Verdict::Reject, body).await
}

async fn rollback(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    authorize(&state, &headers)?;
    let engine = state.engine.clone();
    let view = blocking(move || engine.rollback(&id)).await?;
    Ok(Json(view).into_response())
}

async fn components(State(state): State<AppState>, headers: HeaderMap) -> ApiResult {
    let engine = state.engine.clone();
    let list = blocking(move || Ok(engine.components())).await?;
    Ok(cached_json(&headers, &list))
}

#[derive(Debug, Deserialize)]
pub struct HistoryQuery {
    pub component: Option<String>,
}

async fn history(State(state): State<AppState>, headers: HeaderMap, Query(q): Query<HistoryQuery>) -> ApiResult {
    let component = q.component.filter(|c| !c.is_empty()).ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "query parameter component is required"))?;
    let engine = state.engine.clone();
    let records = blocking(move || engine.history(&component)).await?;
    Ok(cached_json(&headers, &records))
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub format: Option<String>,
}

async fn report(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> ApiResult {
    let run = state.engine.run(&id).ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("run {id}")))?;
    let outcome = run.outcome.as_ref().ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("run {id} has no report ({:?})", run.state)))?;
    match q.format.as_deref().unwrap_or("json") {
        "md" | "markdown" => Ok(cached_body(&headers, outcome.final_report.to_markdown().into_bytes(), "text/markdown; charset=utf-8")),
        "json" => Ok(cached_json(
            &headers,
            &json!({
                "run_id": run.run_id,
                "component_id": run.component_id,
                "report": outcome.final_report,
                "loop_status": outcome.outcome,
                "iterations_used": outcome.iterations_used,
                "reflection_history": outcome.reflection_history,
                "latency_secs": outcome.total_latency.as_secs_f64(),
            }),
        )),
        other => Err(ApiError::new(ErrorCode::BadRequest, format!("unknown format {other:?} (expected md or json)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn etag_round_trip() {
        let body = b"{\"a\":1}".to_vec();
        let fresh = cached_body(&HeaderMap::new(), body.clone(), "application/json");
        assert_eq!(fresh.status(), StatusCode::OK);
        let etag = fresh.headers()[header::ETAG].clone();
        assert_eq!(etag.to_str().unwrap(), format!("\"{}\"", sha256_hex(&body)));
        let mut headers = HeaderMap::new();
        headers.insert(header::IF_NONE_MATCH, HeaderValue::from_str(&format!("\"x\", {}", etag.to_str().unwrap())).unwrap());
        assert_eq!(cached_body(&headers, body, "application/json").status(), StatusCode::NOT_MODIFIED);
    }

    #[test]
    fn engine_errors_map_to_codes() {
        let code = |e: EngineError| ApiError::from(e).code;
        assert_eq!(code(EngineError::BadRequest("x".into())), ErrorCode::BadRequest);
        assert_eq!(code(EngineError::NotFound("x".into())), ErrorCode::NotFound);
        assert_eq!(code(EngineError::RunInFlight { component_id: "c".into(), run_id: "r".into() }), ErrorCode::Conflict);
        assert_eq!(code(EnforcementError::UnknownAction("a".into()).into()), ErrorCode::NotFound);
        assert_eq!(code(EnforcementError::NoSafeSnapshot("c".into()).into()), ErrorCode::Conflict);
        assert_eq!(code(EnforcementError::Io("disk".into()).into()), ErrorCode::Internal);
        let a = ApiError::new(ErrorCode::Internal, "same");
        let b = ApiError::new(ErrorCode::Internal, "same");
        assert_ne!(a.correlation_id, b.correlation_id);
    }
}
