use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use spcc_core::gqm::ComponentRepository;
use spcc_core::store::Store;
use spcc_server::{router, AppState, ROLE_HEADER};
use tower::ServiceExt;

fn app(dir: &tempfile::TempDir) -> Router {
    let store = Store::open(dir.path()).unwrap();
    router(AppState { store: Arc::new(store), repo: Arc::new(ComponentRepository::default_repository()) })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    call_with(app, method, uri, body, None).await
}

async fn call_with(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
    role: Option<&str>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(r) = role {
        req = req.header(ROLE_HEADER, r);
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn setup(app: &Router) {
    let project = json!({
        "id": "demo",
        "name": "Demo",
        "context": { "domain": "web" },
        "roles": [{ "id": "pm", "name": "Project manager" }, { "id": "qa", "name": "QA" }],
        "bindings": { "cost": "proj", "planned_cost": "proj" },
    });
    let (s, v) = call(app, "POST", "/projects", Some(project.to_string())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let goal = json!({
        "id": "g1",
        "object": "project",
        "purpose": "MONITOR",
        "quality_focus": ["cost"],
        "viewpoint": "pm",
    });
    let (s, v) = call(app, "POST", "/projects/demo/goals", Some(goal.to_string())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let q = json!({ "id": "q1", "goal": "g1", "text": "Is cost on plan?", "metrics": ["cost", "planned_cost"] });
    let (s, v) = call(app, "POST", "/projects/demo/questions", Some(q.to_string())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
}

fn measurements(days: u32, actual: f64) -> String {
    let mut s = String::from("metric,entity,timestamp,value\n");
    for d in 1..=days {
        s.push_str(&format!("cost,proj,2024-01-{d:02}T00:00:00Z,{actual}\n"));
        s.push_str(&format!("planned_cost,proj,2024-01-{d:02}T00:00:00Z,100\n"));
    }
    s
}

#[tokio::test]
async fn compose_reports_counts_and_traceability() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    let (s, v) = call(&app, "POST", "/projects/demo/compose", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["catena_version"], 1);
    assert_eq!(v["bindings"], 2);
    assert_eq!(v["functions"], 2);
    assert_eq!(v["views"], 3);
    assert_eq!(v["traceability"]["g1.timeseries"], "g1");
}

#[tokio::test]
async fn starved_view_renders_placeholder() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    let (s, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "NO_DATA");
    let (s, v) = call(&app, "GET", "/projects/demo/scenes/g1.timeseries", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["meta"]["node"], "g1.timeseries");
    assert_eq!(v["meta"]["execution_id"], "demo-x0001");
    assert!(v.to_string().contains("NO_DATA"));
}

#[tokio::test]
async fn parameter_change_requires_fresh_version_and_tightens_band() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    let (s, v) = call(&app, "POST", "/projects/demo/data", Some(measurements(10, 108.0))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["accepted"], 20);

    let (s, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10&catena_version=1", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "GREEN");

    let (s, v) =
        call(&app, "PUT", "/projects/demo/functions/g1.cost-tolerance/params", Some(r#"{"tol":0.05}"#.into())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["catena_version"], 2);
    assert_eq!(v["updates"][0]["old"], 0.1);

    let (s, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10&catena_version=1", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(v["error"], "stale_catena");

    let (s, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10&catena_version=2", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let tol = v["indicators"].as_array().unwrap().iter().find(|i| i["node"] == "g1.cost-tolerance").unwrap();
    assert_eq!(tol["status"], "YELLOW");
    assert!(tol["explanation"].as_str().unwrap().contains("green <= 0.05"));
    assert_eq!(v["deviations"].as_array().unwrap().len(), 2);

    let (s, v) = call(&app, "GET", "/projects/demo/deviations", None).await;
    assert_eq!(s, StatusCode::OK);
    let id = v[0]["id"].as_str().unwrap().to_string();
    let (s, v) = call_with(&app, "POST", &format!("/deviations/{id}/ack"), None, Some("pm")).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["acknowledged"], true);
    assert_eq!(v["acknowledged_by"], "pm");

    let (s, v) = call(&app, "GET", "/projects/demo/deviations?since=2024-01-10T00:00:00Z", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_array().unwrap().is_empty());
}

#[tokio::test]
async fn role_views_are_sorted_by_severity() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    call(&app, "POST", "/projects/demo/data", Some(measurements(5, 130.0))).await;
    call(&app, "POST", "/projects/demo/execute?as_of=2024-01-05", None).await;
    let (s, v) = call(&app, "GET", "/projects/demo/roles/pm/views", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let views = v.as_array().unwrap();
    assert_eq!(views.len(), 3);
    assert_eq!(views[0]["status"], "RED");
    assert_eq!(views[0]["goal"], "g1");
    let (s, v) = call(&app, "GET", "/projects/demo/roles/qa/views", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));
    let (s, _) = call(&app, "GET", "/projects/demo/roles/ghost/views", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;

    let (s, v) = call_with(&app, "POST", "/deviations/nope/ack", None, Some("pm")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");

    let (s, v) = call(&app, "GET", "/projects/ghost", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");

    let dup = json!({ "id": "demo", "name": "again" }).to_string();
    let (s, v) = call(&app, "POST", "/projects", Some(dup)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "already_exists");

    let (s, v) = call(&app, "POST", "/projects/demo/data", Some("a,b\n1,2\n".into())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "header_mismatch");

    let (s, v) = call(&app, "POST", "/projects/demo/goals", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid_body");

    let (s, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "no_catena");

    let (s, v) = call(&app, "POST", "/projects/demo/execute", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");

    let (s, v) = call(&app, "POST", "/projects/demo/package", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "project_active");
}

#[tokio::test]
async fn empty_repository_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let app = router(AppState { store: Arc::new(store), repo: Arc::new(ComponentRepository { components: vec![] }) });
    setup(&app).await;
    let (s, v) = call(&app, "POST", "/projects/demo/compose", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "empty_repository");
    assert_eq!(v["message"], "empty component repository");
}

#[tokio::test]
async fn lifecycle_packages_experience() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    call(&app, "POST", "/projects/demo/data", Some(measurements(10, 130.0))).await;
    let (_, v) = call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10", None).await;
    assert_eq!(v["status"], "RED");
    let incidents = json!([{
        "id": "i1",
        "node": "g1.cost-tolerance",
        "start": "2024-01-01T00:00:00Z",
        "detected_deadline": "2024-01-12T00:00:00Z",
    }]);
    let (s, v) = call(&app, "POST", "/projects/demo/postmortem", Some(incidents.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["in_time"], 1);
    let (s, _) = call(&app, "POST", "/projects/demo/complete", None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let body = json!({ "feedback": { "lesson": "baseline early" } }).to_string();
    let (s, v) = call(&app, "POST", "/projects/demo/package", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let records = v.as_array().unwrap();
    let tol = records.iter().find(|r| r["key"] == "cost-tolerance.tol").unwrap();
    assert_eq!(tol["kind"], "THRESHOLD");
    assert_eq!(tol["value"], 0.1);
    assert!(records.iter().any(|r| r["kind"] == "FEEDBACK"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_executions_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    call(&app, "POST", "/projects/demo/data", Some(measurements(10, 104.0))).await;
    let mut tasks = Vec::new();
    for d in 1..=8 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            call(&app, "POST", &format!("/projects/demo/execute?as_of=2024-01-{d:02}T12:00:00Z"), None).await
        }));
    }
    let mut ids = Vec::new();
    for t in tasks {
        let (s, v) = t.await.unwrap();
        assert_eq!(s, StatusCode::OK, "{v}");
        assert_eq!(v["indicators"].as_array().unwrap().len(), 2);
        ids.push(v["execution_id"].as_str().unwrap().to_string());
    }
    ids.sort();
    let expected: Vec<String> = (1..=8).map(|n| format!("demo-x{n:04}")).collect();
    assert_eq!(ids, expected);
    let (_, summary) = call(&app, "GET", "/projects/demo", None).await;
    assert_eq!(summary["executions"], 8);
}

#[tokio::test]
async fn reads_have_no_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    setup(&app).await;
    call(&app, "POST", "/projects/demo/compose", None).await;
    call(&app, "POST", "/projects/demo/data", Some(measurements(10, 130.0))).await;
    call(&app, "POST", "/projects/demo/execute?as_of=2024-01-10", None).await;
    let log = dir.path().join("projects/demo/events.jsonl");
    let before = std::fs::read(&log).unwrap();
    let uris = [
        "/projects/demo",
        "/projects/demo/catena",
        "/projects/demo/roles/pm/views",
        "/projects/demo/scenes/g1.timeseries",
        "/projects/demo/scenes/g1.gantt?as_of=2024-01-05",
        "/projects/demo/deviations",
        "/projects/demo/executions/demo-x0001",
    ];
    for uri in uris {
        let (s1, a) = call(&app, "GET", uri, None).await;
        let (s2, b) = call(&app, "GET", uri, None).await;
        assert_eq!(s1, StatusCode::OK, "{uri}: {a}");
        assert_eq!((s1, &a), (s2, &b), "{uri}");
    }
    assert_eq!(std::fs::read(&log).unwrap(), before);
    let (_, scene) = call(&app, "GET", "/projects/demo/scenes/g1.timeseries", None).await;
    assert_eq!(scene["meta"]["execution_id"], "demo-x0001");
    assert_eq!(scene["meta"]["catena_version"], 1);
}
