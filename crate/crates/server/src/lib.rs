//! HTTP interface to the control center: project setup, composition,
//! ingestion, execution, role-oriented views, scenes and deviations.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spcc_core::catena::{role_view, CatenaError, ExecutionResult, GroundTruthIncident, ParamValue};
use spcc_core::gqm::{ComponentRepository, ControlGoal, GqmError, Question};
use spcc_core::layout::SceneMeta;
use spcc_core::model::{Project, StatusColor};
use spcc_core::store::formats::parse_instant;
use spcc_core::store::{ProjectHandle, Store, StoreError};
use spcc_core::views::render_scene;
use thiserror::Error;

/// Header carrying the caller's role.
pub const ROLE_HEADER: &str = "x-spcc-role";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub repo: Arc<ComponentRepository>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{message}")]
    Status { status: StatusCode, code: &'static str, message: String, details: Value },
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError::Status { status, code, message: message.into(), details: Value::Null }
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, code, details) = match &e {
            StoreError::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found", Value::Null),
            StoreError::AlreadyExists { .. } => (StatusCode::CONFLICT, "already_exists", Value::Null),
            StoreError::StaleCatena { expected, current } => (
                StatusCode::CONFLICT,
                "stale_catena",
                json!({ "expected": expected, "current": current }),
            ),
            StoreError::NoCatena => (StatusCode::CONFLICT, "no_catena", Value::Null),
            StoreError::ProjectActive => (StatusCode::CONFLICT, "project_active", Value::Null),
            StoreError::HeaderMismatch { expected, found } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "header_mismatch",
                json!({ "expected": expected, "found": found }),
            ),
            StoreError::InvalidPlan(v) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_plan", json!(v)),
            StoreError::Catena(CatenaError::Unvalidated(v)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_catena", json!(v))
            }
            StoreError::Catena(CatenaError::UnknownComponent { node, kind }) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "unknown_component",
                json!({ "node": node, "kind": kind }),
            ),
            StoreError::Catena(_) => (StatusCode::UNPROCESSABLE_ENTITY, "execution_failed", Value::Null),
            StoreError::Gqm(GqmError::EmptyRepository) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "empty_repository", Value::Null)
            }
            StoreError::Gqm(GqmError::UnboundMetric { metric, goal }) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "unbound_metric",
                json!({ "metric": metric, "goal": goal }),
            ),
            StoreError::Gqm(GqmError::MissingParameter { component, parameter, goal }) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_parameter",
                json!({ "component": component, "parameter": parameter, "goal": goal }),
            ),
            StoreError::Gqm(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_gqm", Value::Null),
            StoreError::UnknownRole(r) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_role", json!({ "role": r })),
            StoreError::Malformed(_) | StoreError::InvalidProject(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", Value::Null)
            }
            StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io", Value::Null),
        };
        ApiError::Status { status, code, message, details }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let ApiError::Status { status, code, message, details } = self;
        let mut body = json!({ "error": code, "message": message });
        if !details.is_null() {
            body["details"] = details;
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable("invalid_body", e.to_string()))
}

fn text_body(body: &Bytes) -> ApiResult<String> {
    String::from_utf8(body.to_vec()).map_err(|_| ApiError::unprocessable("invalid_body", "body is not UTF-8"))
}

fn instant(raw: Option<&str>, name: &str) -> ApiResult<Option<DateTime<Utc>>> {
    raw.map(|s| {
        parse_instant(s).ok_or_else(|| ApiError::unprocessable("invalid_query", format!("`{name}` is not an instant")))
    })
    .transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, StoreError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn project(state: &AppState, id: &str) -> ApiResult<Arc<ProjectHandle>> {
    Ok(state.store.project(id)?)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{p}", get(project_summary))
        .route("/projects/{p}/goals", post(add_goal))
        .route("/projects/{p}/questions", post(add_question))
        .route("/projects/{p}/compose", post(compose))
        .route("/projects/{p}/catena", get(get_catena))
        .route("/projects/{p}/data", post(ingest_data))
        .route("/projects/{p}/plan", put(put_plan))
        .route("/projects/{p}/risks", post(post_risks))
        .route("/projects/{p}/traces", post(post_traces))
        .route("/projects/{p}/clusters", post(post_clusters))
        .route("/projects/{p}/execute", post(execute))
        .route("/projects/{p}/executions/{x}", get(get_execution))
        .route("/projects/{p}/roles/{r}/views", get(role_views))
        .route("/projects/{p}/scenes/{view}", get(scene))
        .route("/projects/{p}/deviations", get(deviations))
        .route("/deviations/{id}/ack", post(acknowledge))
        .route("/projects/{p}/functions/{f}/params", put(put_params))
        .route("/projects/{p}/complete", post(complete))
        .route("/projects/{p}/postmortem", post(post_postmortem))
        .route("/projects/{p}/package", post(post_package))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn list_projects(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.store.project_ids())
}

async fn create_project(State(s): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let project: Project = parse_json(&body)?;
    let store = s.store.clone();
    let id = blocking(move || store.create_project(project).map(|h| h.id())).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn project_summary(State(s): State<AppState>, Path(p): Path<String>) -> ApiResult<Json<Value>> {
    let snap = project(&s, &p)?.snapshot();
    Ok(Json(json!({
        "project": snap.project,
        "goals": snap.goals,
        "questions": snap.questions,
        "catena_version": snap.catena_version(),
        "executions": snap.executions.len(),
        "deviations": snap.deviations.len(),
        "points": snap.data.point_count(),
        "complete": snap.complete,
    })))
}

async fn add_goal(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let goal: ControlGoal = parse_json(&body)?;
    let h = project(&s, &p)?;
    blocking(move || h.add_goal(goal)).await?;
    Ok(StatusCode::CREATED)
}

async fn add_question(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let question: Question = parse_json(&body)?;
    let h = project(&s, &p)?;
    blocking(move || h.add_question(question)).await?;
    Ok(StatusCode::CREATED)
}

async fn compose(State(s): State<AppState>, Path(p): Path<String>) -> ApiResult<Json<Value>> {
    project(&s, &p)?;
    let (store, repo) = (s.store.clone(), s.repo.clone());
    let v = blocking(move || store.compose(&p, &repo)).await?;
    Ok(Json(json!({
        "catena_version": v.version,
        "digest": v.digest,
        "bindings": v.catena.bindings.len(),
        "functions": v.catena.functions.len(),
        "views": v.catena.views.len(),
        "traceability": v.traceability,
    })))
}

async fn get_catena(State(s): State<AppState>, Path(p): Path<String>) -> ApiResult<Json<Value>> {
    let snap = project(&s, &p)?.snapshot();
    let c = snap.catena.as_ref().ok_or(StoreError::NoCatena)?;
    Ok(Json(json!(c)))
}

async fn ingest_data(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let text = text_body(&body)?;
    let h = project(&s, &p)?;
    let report = blocking(move || h.ingest_measurements(&text, "http")).await?;
    Ok(Json(json!(report)))
}

async fn put_plan(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let plan = spcc_core::store::formats::parse_plan(&text_body(&body)?)?;
    let h = project(&s, &p)?;
    blocking(move || h.set_plan(plan)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_risks(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let text = text_body(&body)?;
    let h = project(&s, &p)?;
    Ok(Json(json!(blocking(move || h.set_risks(&text)).await?)))
}

async fn post_traces(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let text = text_body(&body)?;
    let h = project(&s, &p)?;
    Ok(Json(json!(blocking(move || h.ingest_traces(&text, "http")).await?)))
}

async fn post_clusters(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let text = text_body(&body)?;
    let h = project(&s, &p)?;
    Ok(Json(json!(blocking(move || h.set_clustering(&text)).await?)))
}

#[derive(Deserialize)]
struct ExecuteQuery {
    as_of: Option<String>,
    catena_version: Option<u32>,
}

fn execution_summary(r: &ExecutionResult) -> Value {
    json!({
        "execution_id": r.id,
        "catena_version": r.catena_version,
        "as_of": r.as_of,
        "status": r.worst_status(),
        "indicators": r.indicators.iter().map(|i| json!({
            "node": i.node,
            "status": i.status,
            "latest": i.latest(),
            "explanation": i.explanation,
        })).collect::<Vec<_>>(),
        "deviations": r.deviations,
    })
}

async fn execute(
    State(s): State<AppState>,
    Path(p): Path<String>,
    Query(q): Query<ExecuteQuery>,
) -> ApiResult<Json<Value>> {
    let as_of = instant(q.as_of.as_deref(), "as_of")?
        .ok_or_else(|| ApiError::unprocessable("invalid_query", "`as_of` is required"))?;
    let h = project(&s, &p)?;
    let r = blocking(move || h.execute(as_of, q.catena_version)).await?;
    Ok(Json(execution_summary(&r)))
}

async fn get_execution(State(s): State<AppState>, Path((p, x)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let snap = project(&s, &p)?.snapshot();
    let r = snap.execution(&x).ok_or_else(|| ApiError::not_found(format!("execution `{x}` not found")))?;
    Ok(Json(json!(r)))
}

#[derive(Deserialize)]
struct AsOfQuery {
    as_of: Option<String>,
}

/// The recorded execution at `as_of` (or the latest one), falling back to
/// an unrecorded evaluation for instants never executed.
fn result_for(h: &ProjectHandle, as_of: Option<DateTime<Utc>>) -> ApiResult<ExecutionResult> {
    let snap = h.snapshot();
    let current = snap.catena_version();
    let recorded = match as_of {
        Some(t) => snap.execution_at(t),
        None => snap.latest_execution(),
    };
    match (recorded, as_of) {
        (Some(r), _) if r.catena_version == current => Ok(r.clone()),
        (_, Some(t)) => Ok(h.preview(t)?),
        (Some(r), None) => Ok(h.preview(r.as_of)?),
        (None, None) => Err(ApiError::not_found("no execution yet; pass as_of or execute first")),
    }
}

#[derive(Serialize)]
struct ViewSummary {
    view: String,
    kind: spcc_core::layout::SceneKind,
    status: StatusColor,
    goal: Option<String>,
    contributing: Vec<String>,
}

async fn role_views(
    State(s): State<AppState>,
    Path((p, r)): Path<(String, String)>,
    Query(q): Query<AsOfQuery>,
) -> ApiResult<Json<Vec<ViewSummary>>> {
    let h = project(&s, &p)?;
    let snap = h.snapshot();
    if !snap.project.has_role(&r) {
        return Err(ApiError::not_found(format!("role `{r}` not found")));
    }
    let Some(c) = snap.catena.as_ref() else {
        return Ok(Json(Vec::new()));
    };
    let result = result_for(&h, instant(q.as_of.as_deref(), "as_of")?)?;
    let out = role_view(&result, &c.catena, &r)
        .into_iter()
        .map(|v| ViewSummary {
            goal: c.traceability.get(&v.view).cloned(),
            view: v.view,
            kind: v.kind,
            status: v.status,
            contributing: v.contributing,
        })
        .collect();
    Ok(Json(out))
}

async fn scene(
    State(s): State<AppState>,
    Path((p, view)): Path<(String, String)>,
    Query(q): Query<AsOfQuery>,
) -> ApiResult<Json<Value>> {
    let h = project(&s, &p)?;
    let snap = h.snapshot();
    let c = snap.catena.as_ref().ok_or(StoreError::NoCatena)?;
    if c.catena.view(&view).is_none() {
        return Err(ApiError::not_found(format!("view `{view}` not found")));
    }
    let result = result_for(&h, instant(q.as_of.as_deref(), "as_of")?)?;
    let state = result
        .view_state(&view)
        .ok_or_else(|| ApiError::not_found(format!("view `{view}` not found")))?;
    let meta = SceneMeta {
        node: view.clone(),
        as_of: Some(result.as_of),
        execution_id: result.id.clone(),
        catena_version: result.catena_version,
        origin: None,
        message: None,
    };
    let doc = render_scene(state, meta).map_err(|e| ApiError::unprocessable("layout_failed", e.to_string()))?;
    let value = serde_json::to_value(&doc).map_err(|e| ApiError::unprocessable("layout_failed", e.to_string()))?;
    Ok(Json(value))
}

#[derive(Deserialize)]
struct SinceQuery {
    since: Option<String>,
}

async fn deviations(
    State(s): State<AppState>,
    Path(p): Path<String>,
    Query(q): Query<SinceQuery>,
) -> ApiResult<Json<Value>> {
    let since = instant(q.since.as_deref(), "since")?;
    Ok(Json(json!(project(&s, &p)?.snapshot().deviations_since(since))))
}

#[derive(Deserialize)]
struct AckBody {
    role: Option<String>,
}

async fn acknowledge(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let from_body = if body.is_empty() { None } else { parse_json::<AckBody>(&body)?.role };
    let role = from_body
        .or_else(|| headers.get(ROLE_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .ok_or_else(|| ApiError::unprocessable("missing_role", "a role is required to acknowledge"))?;
    let store = s.store.clone();
    let event = blocking(move || store.acknowledge(&id, &role)).await?;
    Ok(Json(json!(event)))
}

async fn put_params(
    State(s): State<AppState>,
    Path((p, f)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let params: BTreeMap<String, ParamValue> = parse_json(&body)?;
    if params.is_empty() {
        return Err(ApiError::unprocessable("invalid_body", "no parameters given"));
    }
    let h = project(&s, &p)?;
    let updates = blocking(move || {
        params.into_iter().map(|(name, value)| h.set_parameter(&f, &name, value)).collect::<Result<Vec<_>, _>>()
    })
    .await?;
    let version = updates.last().map(|u| u.catena_version);
    Ok(Json(json!({ "updates": updates, "catena_version": version, "reexecution_required": true })))
}

async fn complete(State(s): State<AppState>, Path(p): Path<String>) -> ApiResult<StatusCode> {
    let h = project(&s, &p)?;
    blocking(move || h.complete()).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_postmortem(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let mut incidents: Vec<GroundTruthIncident> = parse_json(&body)?;
    incidents.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    let h = project(&s, &p)?;
    Ok(Json(json!(blocking(move || h.postmortem(incidents)).await?)))
}

#[derive(Deserialize, Default)]
struct PackageBody {
    #[serde(default)]
    feedback: BTreeMap<String, String>,
    created: Option<DateTime<Utc>>,
}

async fn post_package(State(s): State<AppState>, Path(p): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: PackageBody = if body.is_empty() { PackageBody::default() } else { parse_json(&body)? };
    let h = project(&s, &p)?;
    let created = req
        .created
        .or_else(|| h.snapshot().latest_execution().map(|e| e.as_of))
        .unwrap_or_else(Utc::now);
    let feedback: Vec<(String, String)> = req.feedback.into_iter().collect();
    let store = s.store.clone();
    Ok(Json(json!(blocking(move || store.package(&p, &feedback, created)).await?)))
}
