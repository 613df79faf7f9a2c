//! HTTP routes. Mutating routes go through the writer; read-only routes
//! answer from the latest snapshot and never append.

use std::collections::BTreeMap;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hazardline_core::ensemble::ScenarioId;
use hazardline_core::fusion::{parse_reports_ndjson, Decision, ReportStatus};
use hazardline_core::polfc::{ControlStrategy, ReplanTrigger, Situation, StrategyId};
use hazardline_core::CostVector;

use crate::events::{EventError, EventRecord};
use crate::service::{Service, ServiceError};
use crate::state::{RunPhase, StateError};

const MAX_EVENT_BATCH: usize = 10_000;
const MAX_WAIT_MS: u64 = 30_000;

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/api/reports", post(ingest_reports).get(list_reports))
        .route("/api/reports/{id}/review", post(review_report))
        .route("/api/belief.asc", get(belief_raster))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/replan", post(replan))
        .route("/api/sessions/{id}/commit", post(commit))
        .route("/api/runs/{id}/progress", get(run_progress))
        .route("/api/runs/{id}/pareto", get(run_pareto))
        .route("/api/state/{run}/{scenario}/{file}", get(state_raster))
        .route("/api/events", get(events))
        .route("/api/digest", get(digest))
        .with_state(service)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{} not found", what.into()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::State(StateError::NotFound(_)) => Self::new(StatusCode::NOT_FOUND, message),
            ServiceError::State(StateError::Conflict(_)) => Self::new(StatusCode::CONFLICT, message),
            ServiceError::State(StateError::NotOnFront { strategy, front }) => Self {
                status: StatusCode::CONFLICT,
                body: json!({ "error": message, "strategy_id": strategy, "front": front }),
            },
            ServiceError::State(StateError::Invalid(_)) => Self::new(StatusCode::BAD_REQUEST, message),
            ServiceError::Log(EventError::Schema { .. }) => Self::new(StatusCode::BAD_REQUEST, message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn seqs(records: &[EventRecord]) -> Vec<u64> {
    records.iter().map(|r| r.seq).collect()
}

fn ascii(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn ingest_reports(State(svc): State<Service>, body: String) -> ApiResult<impl IntoResponse> {
    let reports = parse_reports_ndjson(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if reports.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "no reports in body"));
    }
    let ids: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
    let written = svc.ingest(reports).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "ids": ids, "seqs": seqs(&written) }))))
}

#[derive(Deserialize)]
struct ReportFilter {
    status: Option<String>,
}

async fn list_reports(State(svc): State<Service>, Query(q): Query<ReportFilter>) -> ApiResult<impl IntoResponse> {
    let status = match q.status.as_deref() {
        None => None,
        Some(s) => Some(
            ReportStatus::parse(s).ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown status {s}")))?,
        ),
    };
    let snap = svc.snapshot();
    let reports: Vec<_> =
        snap.queue().reports().iter().filter(|r| status.is_none_or(|s| r.status == s)).cloned().collect();
    Ok(Json(json!({ "reports": reports })))
}

#[derive(Deserialize)]
struct ReviewBody {
    decision: Decision,
    reviewer: String,
}

async fn review_report(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<ReviewBody>,
) -> ApiResult<impl IntoResponse> {
    if body.reviewer.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "reviewer must not be empty"));
    }
    let record = svc.review(id.clone(), body.decision, body.reviewer).await?;
    let report = svc.snapshot().queue().get(&id).cloned();
    Ok(Json(json!({ "report": report, "seq": record.seq })))
}

async fn belief_raster(State(svc): State<Service>) -> Response {
    ascii(svc.snapshot().belief().to_raster().to_esri_ascii())
}

async fn create_session(State(svc): State<Service>) -> ApiResult<impl IntoResponse> {
    let record = svc.create_session().await?;
    let crate::events::Event::SessionCreated { session_id } = &record.event else {
        unreachable!("create_session appends SESSION_CREATED")
    };
    let snap = svc.snapshot();
    let session = snap.session(session_id).expect("just created");
    Ok((StatusCode::CREATED, Json(json!({ "session": snap.summary(session), "seq": record.seq }))))
}

async fn get_session(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let snap = svc.snapshot();
    let session = snap.session(&id).ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    Ok(Json(json!({ "session": snap.summary(session) })))
}

#[derive(Deserialize)]
struct ReplanBody {
    trigger: ReplanTrigger,
}

async fn replan(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<ReplanBody>,
) -> ApiResult<impl IntoResponse> {
    let (run_id, written) = svc.replan(id, body.trigger).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id, "seqs": seqs(&written) }))))
}

#[derive(Deserialize)]
struct CommitBody {
    strategy_id: StrategyId,
}

async fn commit(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Json(body): Json<CommitBody>,
) -> ApiResult<impl IntoResponse> {
    let record = svc.commit(id.clone(), body.strategy_id).await?;
    let snap = svc.snapshot();
    let session = snap.session(&id).expect("commit succeeded");
    Ok(Json(json!({ "session": snap.summary(session), "seq": record.seq })))
}

async fn run_progress(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let snap = svc.snapshot();
    let run = snap.run(&id).ok_or_else(|| ApiError::not_found(format!("run {id}")))?;
    Ok(Json(run.clone()))
}

#[derive(Serialize)]
struct ParetoEntry<'a> {
    strategy_id: StrategyId,
    label: &'a str,
    expected: &'a CostVector,
    covered_fraction: f64,
    low_confidence: bool,
    on_front: bool,
}

async fn run_pareto(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = svc.snapshot();
    let run = snap.run(&id).ok_or_else(|| ApiError::not_found(format!("run {id}")))?;
    let Some(plan) = &run.plan else {
        let message = match run.phase {
            RunPhase::Failed => format!("run {id} failed: {}", run.error.as_deref().unwrap_or("unknown error")),
            _ => format!("run {id} is still running"),
        };
        return Err(ApiError::new(StatusCode::CONFLICT, message));
    };
    let entries: Vec<ParetoEntry> = plan
        .result
        .entries
        .iter()
        .map(|(sid, e)| ParetoEntry {
            strategy_id: *sid,
            label: plan.strategy(*sid).map(|s| s.label.as_str()).unwrap_or(""),
            expected: &e.expected,
            covered_fraction: e.covered_fraction,
            low_confidence: e.low_confidence,
            on_front: plan.front.contains(*sid),
        })
        .collect();
    Ok(Json(json!({
        "run_id": run.run_id,
        "session_id": run.session_id,
        "phase": run.phase,
        "criteria": plan.result.criteria,
        "front": plan.front.members,
        "dominance": plan.front.dominance,
        "selected": plan.selected,
        "entries": entries,
        "provenance": plan.result.provenance,
        "plan_digest": plan.digest(),
    }))
    .into_response())
}

#[derive(Deserialize)]
struct StateQuery {
    strategy: Option<u32>,
}

/// Simulated state of one scenario at step `t` under a strategy of the run
/// (default: the selected one, else the null strategy).
async fn state_raster(
    State(svc): State<Service>,
    Path((run_id, scenario, file)): Path<(String, String, String)>,
    Query(q): Query<StateQuery>,
) -> ApiResult<Response> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, m);
    let t: u32 = file
        .strip_suffix(".asc")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(format!("expected <step>.asc, got {file}")))?;
    let sid: u32 = scenario
        .strip_prefix('e')
        .unwrap_or(&scenario)
        .parse()
        .map_err(|_| bad(format!("bad scenario id {scenario}")))?;
    let snap = svc.snapshot();
    let run = snap.run(&run_id).ok_or_else(|| ApiError::not_found(format!("run {run_id}")))?;
    let session = snap.session(&run.session_id).expect("runs belong to sessions");
    let model = session.planner.model();
    let scenario = session
        .planner
        .design()
        .get(ScenarioId(sid))
        .ok_or_else(|| ApiError::not_found(format!("scenario e{sid}")))?
        .clone();
    let t_now = run.observed.t();
    if t < t_now || t > model.t_end {
        return Err(bad(format!("step {t} outside [{t_now}, {}]", model.t_end)));
    }
    let plan = run.plan.as_deref();
    let strategy: ControlStrategy = match q.strategy.map(StrategyId).or(plan.and_then(|p| p.selected)) {
        Some(id) if id != StrategyId::NULL => plan
            .and_then(|p| p.strategy(id))
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("strategy {id} in run {run_id}")))?,
        _ => ControlStrategy::null(),
    };
    let model = model.clone();
    let observed = run.observed.clone();
    let belief = run.belief.clone();
    let text = tokio::task::spawn_blocking(move || {
        let situation = Situation { model: &model, observed: &observed, belief: &belief };
        situation.trajectory(&strategy, &scenario, t - t_now).map(|tr| tr.last().to_raster().to_esri_ascii())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(ascii(text))
}

#[derive(Deserialize)]
struct EventQuery {
    #[serde(default)]
    since: u64,
    #[serde(default)]
    timeout_ms: u64,
    limit: Option<usize>,
}

async fn events(State(svc): State<Service>, Query(q): Query<EventQuery>) -> Json<serde_json::Value> {
    let limit = q.limit.unwrap_or(MAX_EVENT_BATCH).clamp(1, MAX_EVENT_BATCH);
    let batch = if q.timeout_ms == 0 {
        svc.events_since(q.since, limit)
    } else {
        svc.wait_events(q.since, limit, Duration::from_millis(q.timeout_ms.min(MAX_WAIT_MS))).await
    };
    let last_seq = batch.last().map(|r| r.seq).unwrap_or(q.since);
    Json(json!({ "events": batch, "last_seq": last_seq }))
}

async fn digest(State(svc): State<Service>) -> Json<serde_json::Value> {
    let snap = svc.snapshot();
    let per_session: BTreeMap<&str, Option<String>> =
        snap.sessions().map(|s| (s.session_id.as_str(), s.planner.plan().map(|p| p.digest()))).collect();
    Json(json!({
        "last_seq": snap.last_seq(),
        "digest": snap.digest(),
        "belief": snap.belief().digest(),
        "plans": per_session,
    }))
}
