use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use notebar_core::router::model::save_model;
use notebar_core::router::{FeatureSpec, RouterModel};
use notebar_core::{Kind, KindScores};
use notebar_gateway::config::ServiceConfig;
use notebar_gateway::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

const CALL_NOTE: &str = "[2024-05-02][09:00][Office][Laptop][Clear] Call the supplier about the late order at 3:00 PM";

/// Bias-only model routing every note to task and event.
fn task_model() -> RouterModel {
    let mut m = RouterModel::zeros(FeatureSpec::default());
    m.bias = KindScores::splat(-10.0);
    m.bias.set(Kind::Task, 10.0);
    m.bias.set(Kind::Event, 10.0);
    m
}

fn config_in(dir: &std::path::Path) -> ServiceConfig {
    let model_path = dir.join("router.nbrm");
    std::fs::write(&model_path, save_model(&task_model())).unwrap();
    ServiceConfig {
        model_path: Some(model_path),
        vault_path: Some(dir.join("vault.nbvs")),
        ledger_path: Some(dir.join("feedback.jsonl")),
        ..ServiceConfig::default()
    }
}

fn app(cfg: ServiceConfig) -> Router {
    router(Arc::new(AppState::open(cfg).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn post_note(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        "/notes",
        Some(json!({ "text": text, "persona": "INTJ", "id": id })),
    )
    .await
}

fn find<'a>(suggestions: &'a Value, variant: &str, kind: &str) -> &'a Value {
    suggestions
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["payload"]["type"] == variant && s["kind_trigger"] == kind)
        .unwrap_or_else(|| panic!("no {variant} for {kind} in {suggestions}"))
}

#[tokio::test]
async fn health_reports_loaded_model() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(config_in(dir.path()));
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["notes"], 0);
    assert_eq!(body["dataset_loaded"], false);
}

#[tokio::test]
async fn notes_are_routed_stored_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(config_in(dir.path()));

    let (status, body) = post_note(&app, "n1", CALL_NOTE).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["probabilities"].as_object().unwrap().len(), 20);
    assert_eq!(body["labels"], json!(["task", "event"]));
    assert_eq!(body["note"]["id"], "n1");

    let (status, body) = post_note(&app, "n1", CALL_NOTE).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    let (status, body) = post_note(&app, "bad", "no header here").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "parse");

    post_note(
        &app,
        "n2",
        "[2024-05-03][10:00][Home][Phone][Rain] Buy paint for the fence",
    )
    .await;
    let (_, all) = call(&app, "GET", "/notes", None).await;
    assert_eq!(all.as_array().unwrap().len(), 2);
    let (_, may2) = call(&app, "GET", "/notes?from=2024-05-02&to=2024-05-02", None).await;
    assert_eq!(may2.as_array().unwrap().len(), 1);
    let (_, ideas) = call(&app, "GET", "/notes?kind=idea", None).await;
    assert!(ideas.as_array().unwrap().is_empty());

    let (status, one) = call(&app, "GET", "/notes/n2", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(one["note"]["id"], "n2");
    let (status, _) = call(&app, "GET", "/notes/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, stats) = call(&app, "GET", "/stats", None).await;
    assert_eq!(stats["source"], "vault");
    assert_eq!(stats["stats"]["note_count"], 2);

    let (status, routed) = call(
        &app,
        "POST",
        "/route",
        Some(json!({ "text": CALL_NOTE, "persona": "ENFP" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(routed["labels"], json!(["task", "event"]));
    let (_, health) = call(&app, "GET", "/health", None).await;
    assert_eq!(health["notes"], 2, "route must not store");
}

#[tokio::test]
async fn feedback_drives_board_and_calendar() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(config_in(dir.path()));
    post_note(&app, "n1", CALL_NOTE).await;

    let (status, suggestions) = call(&app, "GET", "/notes/n1/suggestions", None).await;
    assert_eq!(status, StatusCode::OK);
    let card = find(&suggestions, "kanban_task", "task").clone();
    let event = find(&suggestions, "calendar_event", "event").clone();
    assert_eq!(event["payload"]["start_time"], "15:00:00");
    assert_eq!(card["status"], "proposed");

    let (_, again) = call(&app, "GET", "/notes/n1/suggestions", None).await;
    assert_eq!(again.as_array().unwrap().len(), suggestions.as_array().unwrap().len());

    let (_, board) = call(&app, "GET", "/kanban", None).await;
    assert!(board["todo"].as_array().unwrap().is_empty());

    let (status, out) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({ "suggestion_id": card["id"], "action": "accept" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["threshold_before"], 0.5);
    assert_eq!(out["threshold_after"], 0.49);
    let (_, board) = call(&app, "GET", "/kanban", None).await;
    assert_eq!(board["todo"].as_array().unwrap().len(), 1);
    assert_eq!(board["todo"][0]["suggestion_id"], card["id"]);
    assert_eq!(board["todo"][0]["lane"], "todo");

    let (status, body) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({ "suggestion_id": card["id"], "action": "dismiss" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "double_feedback");
    let (status, _) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({ "suggestion_id": "s999", "action": "accept" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let mut edited = event["payload"].clone();
    edited["start_time"] = json!("10:00:00");
    let (status, out) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({ "suggestion_id": event["id"], "action": "edit", "edited_payload": edited })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    let (_, day) = call(&app, "GET", "/calendar?date=2024-05-02", None).await;
    let events = day["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["start_time"], "10:00:00");
    assert_eq!(events[0]["suggestion_id"], event["id"]);
    let (_, other) = call(&app, "GET", "/calendar?date=2024-05-03", None).await;
    assert!(other["events"].as_array().unwrap().is_empty());

    let bad = json!({ "type": "kanban_task", "title": "x", "lane": "todo", "source_note_id": "n1" });
    let task_event = find(&suggestions, "calendar_event", "task");
    let (status, body) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({ "suggestion_id": task_event["id"], "action": "edit", "edited_payload": bad })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_edit");
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    {
        let app = app(cfg.clone());
        post_note(&app, "n1", CALL_NOTE).await;
        let (_, suggestions) = call(&app, "GET", "/notes/n1/suggestions", None).await;
        let card = find(&suggestions, "kanban_task", "task");
        call(
            &app,
            "POST",
            "/feedback",
            Some(json!({ "suggestion_id": card["id"], "action": "dismiss" })),
        )
        .await;
    }
    let app = app(cfg);
    let (_, health) = call(&app, "GET", "/health", None).await;
    assert_eq!(health["notes"], 1);
    let (_, suggestions) = call(&app, "GET", "/notes/n1/suggestions", None).await;
    assert_eq!(find(&suggestions, "kanban_task", "task")["status"], "dismissed");
    let (status, routed) = call(
        &app,
        "POST",
        "/route",
        Some(json!({ "text": CALL_NOTE, "persona": "INTJ" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(routed["model_version"], health["model_version"]);
}

async fn wait_for_job(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (status, job) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if job["status"] == "succeeded" || job["status"] == "failed" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn dataset_and_training_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    let model_path = cfg.model_path.clone().unwrap();
    let app = app(cfg);

    let (status, body) = call(&app, "POST", "/train", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "no_dataset");

    let (status, body) = call(
        &app,
        "POST",
        "/dataset/generate",
        Some(json!({ "seed": 5, "notes_per_persona": [40, 40], "personas": ["INTJ", "ENFP", "ISFJ"] })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["stats"]["note_count"], 120);
    assert!(body["qa"]["pass"].as_u64().unwrap() > 0, "{body}");
    let (_, stats) = call(&app, "GET", "/stats", None).await;
    assert_eq!(stats["source"], "dataset");

    let (_, before) = call(&app, "GET", "/health", None).await;
    let (status, body) = call(&app, "POST", "/train", Some(json!({}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_for_job(&app, body["job_id"].as_str().unwrap()).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    assert_eq!(job["kind"], "train");
    let (_, after) = call(&app, "GET", "/health", None).await;
    assert!(after["model_version"].as_u64() > before["model_version"].as_u64());
    assert_eq!(job["result"]["model_version"], after["model_version"]);
    assert!(job["result"]["test"]["micro_f1"].as_f64().unwrap() > 0.0);
    let saved = notebar_gateway::ops::read_model(&model_path).unwrap();
    assert_eq!(saved.version, after["model_version"].as_u64().unwrap());

    let (status, body) = call(&app, "POST", "/eval", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_for_job(&app, body["job_id"].as_str().unwrap()).await;
    assert_eq!(job["status"], "succeeded", "{job}");

    let (status, body) = call(&app, "POST", "/sweep", Some(json!({ "grid": "huge" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "usage");
    let grid = json!({ "batch_sizes": [16], "learning_rates": [0.05, 0.1], "epoch_counts": [3], "selection_metric": "micro_f1" });
    let (status, body) = call(&app, "POST", "/sweep", Some(json!({ "grid": grid }))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let job = wait_for_job(&app, body["job_id"].as_str().unwrap()).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    assert_eq!(job["result"]["result"]["points"].as_array().unwrap().len(), 2);

    let (status, _) = call(&app, "GET", "/jobs/j999999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn ingest_inline_records() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(config_in(dir.path()));
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/fixtures/released_sample.jsonl"
    ))
    .unwrap();
    let mapping: Value = serde_json::from_str(
        &std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../core/tests/fixtures/external_mapping.json"
        ))
        .unwrap(),
    )
    .unwrap();
    let (status, body) = call(
        &app,
        "POST",
        "/dataset/ingest",
        Some(json!({ "text": text, "mapping": mapping })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["records"], 48);
    assert_eq!(body["errors"].as_array().unwrap().len(), 2);

    let (status, _) = call(&app, "POST", "/dataset/ingest", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, qa) = call(&app, "POST", "/dataset/qa", None).await;
    assert_eq!(status, StatusCode::OK, "{qa}");
}
