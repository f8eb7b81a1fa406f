use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use evrec_cli::service::{router, AppState};
use evrec_cli::view::rank_view;
use evrec_core::dataio::{build_samples, load_bundle, DatasetBundle};
use evrec_core::model::UserId;
use evrec_core::presets;
use evrec_core::synth::{synth_bundle, SynthConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn app(bundle: DatasetBundle) -> Router {
    router(AppState::start(bundle, Vec::new(), Vec::new(), None))
}

fn salone() -> Router {
    app(load_bundle(fixture("salone_events")).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

fn order(v: &Value) -> Vec<String> {
    v["scored"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["event_id"].as_str().unwrap().to_owned())
        .collect()
}

fn sigma_x_weights() -> Value {
    json!({ "thi": 0.5698, "tyi": 0.3286, "rat": 0.0848, "rch": 0.1967, "frn": 0.07965 })
}

#[tokio::test]
async fn rank_with_published_weights_matches_the_cli_order() {
    let app = salone();
    let (status, v, text) = call(
        &app,
        "POST",
        "/api/v1/rank",
        Some(json!({ "user_id": "susan", "weights": sigma_x_weights(), "intercept": -3.0467 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{text}");
    assert!(!text.contains("e-") && !text.contains("E-"), "decimal numbers only");

    let bundle = load_bundle(fixture("salone_events")).unwrap();
    let susan = bundle.user(&UserId::new("susan")).unwrap();
    let view = rank_view(&bundle, susan, &presets::sigma_x());
    let want: Vec<String> = view.scored.iter().map(|r| r.event_id.to_string()).collect();
    assert_eq!(order(&v), want);
    assert_eq!(v["failed"].as_array().unwrap().len(), view.failed.len());

    let (_, by_model, _) = call(&app, "POST", "/api/v1/rank", Some(json!({ "user_id": "susan", "model_id": "sigma_x" }))).await;
    assert_eq!(order(&by_model), want);

    // breakdown adds up to the score
    for row in v["scored"].as_array().unwrap() {
        let parts: f64 = row["contributions"].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
        let total = row["intercept"].as_f64().unwrap() + parts;
        assert!((total - row["score"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[tokio::test]
async fn rank_rejects_invalid_weights() {
    let app = salone();
    for body in [
        json!({ "user_id": "susan", "weights": {} }),
        json!({ "user_id": "susan" }),
        json!({ "user_id": "susan", "weights": { "thi": null }, "intercept": 1.0 }),
        json!({ "user_id": "susan", "weights": { "thi": 1.0 }, "model_id": "sigma_x" }),
        json!({ "user_id": "susan", "weights": { "thi": "high" } }),
        json!({ "user_id": "susan", "weights": { "bogus": 1.0 } }),
    ] {
        let (status, v, _) = call(&app, "POST", "/api/v1/rank", Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert!(v["code"].is_string() && v["message"].is_string() && v.get("detail").is_some(), "{v}");
    }
}

#[tokio::test]
async fn absent_weights_switch_factors_off() {
    let app = salone();
    let (_, content_only, _) = call(
        &app,
        "POST",
        "/api/v1/rank",
        Some(json!({ "user_id": "susan", "weights": { "thi": 0.5, "tyi": 0.4 } })),
    )
    .await;
    for row in content_only["scored"].as_array().unwrap() {
        let keys: Vec<&String> = row["contributions"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["thi", "tyi"]);
    }
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let app = salone();
    for (method, uri, body) in [
        ("GET", "/api/v1/runs/run-9999", None),
        ("GET", "/api/v1/models/nope", None),
        ("GET", "/api/v1/users/nobody/factors", None),
        ("POST", "/api/v1/rank", Some(json!({ "user_id": "nobody", "weights": { "thi": 1.0 } }))),
        ("POST", "/api/v1/rank", Some(json!({ "user_id": "susan", "model_id": "nope" }))),
    ] {
        let (status, v, _) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["code"], "not_found");
    }
}

#[tokio::test]
async fn events_and_factors_are_listed() {
    let app = salone();
    let (status, v, _) = call(&app, "GET", "/api/v1/events", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["events"].as_array().unwrap().len(), 30);

    let (status, v, _) = call(&app, "GET", "/api/v1/users/susan/factors", None).await;
    assert_eq!(status, StatusCode::OK);
    let events = v["events"].as_array().unwrap();
    assert_eq!(events.len(), 30);
    let o12 = events.iter().find(|e| e["event_id"] == "o12").unwrap();
    assert_eq!(o12["error"]["code"], "missing_interest");

    let (_, models, _) = call(&app, "GET", "/api/v1/models", None).await;
    assert_eq!(models["models"].as_array().unwrap().len(), presets::all().len());
    let (status, m, _) = call(&app, "GET", "/api/v1/models/sigma_xd_tyi", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["source"], "preset");
}

#[tokio::test]
async fn training_runs_are_queued_and_publish_models() {
    let bundle = synth_bundle(&SynthConfig {
        n_users: 30,
        ..SynthConfig::new(4)
    });
    assert!(build_samples(&bundle).rejects.is_empty());
    let app = app(bundle);

    let (status, v, _) = call(&app, "POST", "/api/v1/train", Some(json!({ "regimes": ["ia_z"] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "unknown_regime");

    let (status, first, _) = call(
        &app,
        "POST",
        "/api/v1/train",
        Some(json!({ "regimes": ["ia0_fin", "ia_x"], "splits": 5, "seed": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (_, second, _) = call(&app, "POST", "/api/v1/train", Some(json!({ "regimes": ["ia_x"], "seed": 1 }))).await;
    assert_eq!(first["run_id"], "run-0001");
    assert_eq!(second["run_id"], "run-0002");

    let mut done = Value::Null;
    for _ in 0..600 {
        let (_, v, _) = call(&app, "GET", "/api/v1/runs/run-0002", None).await;
        if v["status"] == "completed" || v["status"] == "failed" {
            done = v;
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(done["status"], "completed", "{done}");
    let (_, first_done, _) = call(&app, "GET", "/api/v1/runs/run-0001", None).await;
    assert_eq!(first_done["status"], "completed");
    assert!(first_done["finished_at"].as_u64() <= done["started_at"].as_u64(), "runs execute in order");
    assert_eq!(first_done["report"]["plan"]["n_splits"], 5);

    let (status, m, _) = call(&app, "GET", "/api/v1/models/run-0001-ia_x", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["source"], "trained");
    let (status, ranked, _) = call(
        &app,
        "POST",
        "/api/v1/rank",
        Some(json!({ "user_id": "u0001", "model_id": "run-0001-ia_x" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(order(&ranked).len(), 15);
}

#[tokio::test]
async fn shared_state_serves_concurrent_requests() {
    let state = AppState::start(load_bundle(fixture("salone_events")).unwrap(), Vec::new(), Vec::new(), None);
    let app = router(Arc::clone(&state));
    let mut handles = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let (_, v, _) = call(&app, "POST", "/api/v1/rank", Some(json!({ "user_id": "susan", "model_id": "sigma_x" }))).await;
            order(&v)
        }));
    }
    let mut orders = Vec::new();
    for h in handles {
        orders.push(h.await.unwrap());
    }
    assert!(orders.windows(2).all(|w| w[0] == w[1]));
}
