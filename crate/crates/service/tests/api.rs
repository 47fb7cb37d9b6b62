use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nile_core::translator::{read_dataset, train, Seq2SeqModel, TrainConfig, TrainingExample};
use nile_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const UTTERANCE: &str = "Please add a firewall and an IDS from Iperf client to server";

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn trained() -> &'static Seq2SeqModel {
    static MODEL: OnceLock<Seq2SeqModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let ex = TrainingExample::new(
            toks("@middlebox @middlebox#2 @origin @destination"),
            toks("define intent @intent_name : from endpoint ( ' @origin ' ) to endpoint ( ' @destination ' ) add middlebox ( ' @middlebox ' ) , middlebox ( ' @middlebox#2 ' )"),
        );
        let config = TrainConfig {
            epochs: 60,
            validation_split: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        train(&vec![ex; 64], &config).unwrap().0
    })
}

struct Harness {
    dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
}

fn harness(train_on_feedback: bool, static_dir: Option<&Path>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    trained().save(dir.path().join("weights.json")).unwrap();
    let state = AppState::open(ServiceConfig {
        weights: dir.path().join("weights.json"),
        dataset: dir.path().join("dataset.jsonl"),
        network: None,
        session_log: Some(dir.path().join("sessions.jsonl")),
        static_dir: static_dir.map(Path::to_path_buf),
        train_on_feedback,
        intent_name: "testIntent".into(),
    })
    .unwrap();
    Harness {
        app: router(state.clone()),
        state,
        dir,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn open_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/intent", Some(json!({ "utterance": UTTERANCE }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn confirm_learn_and_deploy() {
    let h = harness(true, None);
    let (status, body) = call(&h.app, "POST", "/intent", Some(json!({ "utterance": UTTERANCE }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body["nile_text"],
        "define intent testIntent:\n  from endpoint('iperf client')\n  to endpoint('iperf server')\n  add middlebox('firewall'),\n      middlebox('ids')"
    );
    let id = body["session_id"].as_str().unwrap().to_string();

    let (status, _) = call(&h.app, "POST", &format!("/intent/{id}/deploy"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = call(&h.app, "POST", &format!("/intent/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "confirmed");
    assert_eq!(body["dataset_size"], 1);

    let (status, _) = call(&h.app, "POST", &format!("/intent/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    h.state.wait_idle().await;
    let (_, metrics) = call(&h.app, "GET", "/metrics", None).await;
    assert_eq!(metrics["dataset_size"], 1);
    assert_eq!(metrics["feedback_count"], 1);
    assert!(metrics["last_train_loss"].as_f64().unwrap().is_finite());
    assert_eq!(read_dataset(h.dir.path().join("dataset.jsonl")).unwrap().len(), 1);
    // Fine-tuned weights replace the originals on disk.
    let saved = Seq2SeqModel::load(h.dir.path().join("weights.json")).unwrap();
    assert_ne!(saved.network.params, trained().network.params);

    let (status, body) = call(&h.app, "POST", &format!("/intent/{id}/deploy"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["deployable"], true);
    let golden = include_str!("../../core/data/iperf_commands.sh");
    assert_eq!(body["commands"].as_str().unwrap().trim_end(), golden.trim_end());

    let (_, session) = call(&h.app, "GET", &format!("/intent/{id}"), None).await;
    assert_eq!(session["status"], "deployed");
    let log = std::fs::read_to_string(h.dir.path().join("sessions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[tokio::test]
async fn corrections() {
    let h = harness(false, None);
    let id = open_session(&h.app).await;
    let uri = format!("/intent/{id}/confirm");

    let (status, body) = call(&h.app, "POST", &uri, Some(json!({ "corrected_nile": "define intent x:\n  add" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["line"], 2);
    assert!(body["column"].as_u64().unwrap() > 0);

    let foreign = "define intent x:\n  add middlebox('teleporter')";
    let (status, body) = call(&h.app, "POST", &uri, Some(json!({ "corrected_nile": foreign }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("teleporter"));

    let swapped = "define intent testIntent:\n  from endpoint('iperf client')\n  to endpoint('iperf server')\n  add middlebox('ids'), middlebox('firewall')";
    let (status, body) = call(&h.app, "POST", &uri, Some(json!({ "corrected_nile": swapped }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "corrected");
    let stored = read_dataset(h.dir.path().join("dataset.jsonl")).unwrap();
    assert!(stored[0].output.join(" ").contains("' @middlebox#2 ' ) , middlebox ( ' @middlebox '"));

    let (_, body) = call(&h.app, "POST", &format!("/intent/{id}/deploy"), None).await;
    assert!(body["commands"].as_str().unwrap().contains("-dst ids:in"));
    assert!(body["commands"].as_str().unwrap().find("-n ids") < body["commands"].as_str().unwrap().find("-n fw"));
}

#[tokio::test]
async fn unchanged_correction_counts_as_confirmation() {
    let h = harness(false, None);
    let (_, body) = call(&h.app, "POST", "/intent", Some(json!({ "utterance": UTTERANCE }))).await;
    let id = body["session_id"].as_str().unwrap();
    let same = body["nile_text"].clone();
    let (status, body) = call(&h.app, "POST", &format!("/intent/{id}/confirm"), Some(json!({ "corrected_nile": same }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "confirmed");
}

#[tokio::test]
async fn request_errors() {
    let h = harness(false, None);
    let (status, body) = call(&h.app, "POST", "/intent", Some(json!({ "utterance": "hello there" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["guidance"].is_string());

    let (status, _) = call(&h.app, "POST", "/intent", Some(json!({ "utterance": "  " }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let many = "add a firewall, a firewall, a firewall, a firewall and a firewall from client to server";
    let (status, _) = call(&h.app, "POST", "/intent", Some(json!({ "utterance": many }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    for uri in ["/intent/nope", "/intent/nope/confirm", "/intent/nope/deploy"] {
        let method = if uri == "/intent/nope" { "GET" } else { "POST" };
        let (status, _) = call(&h.app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }

    let id = open_session(&h.app).await;
    let (status, _) = call(&h.app, "POST", &format!("/intent/{id}/confirm"), Some(json!("not an object"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn eval_updates_metrics() {
    let h = harness(false, None);
    let ex = TrainingExample::new(
        toks("@middlebox @middlebox#2 @origin @destination"),
        toks("define intent @intent_name : from endpoint ( ' @origin ' ) to endpoint ( ' @destination ' ) add middlebox ( ' @middlebox ' ) , middlebox ( ' @middlebox#2 ' )"),
    );
    let (status, body) = call(&h.app, "POST", "/eval", Some(json!({ "examples": [ex] }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["n"], 1);
    assert_eq!(body["exact_rate"], 1.0);
    let (_, metrics) = call(&h.app, "GET", "/metrics", None).await;
    assert_eq!(metrics["mean_r2_last_eval"], 1.0);

    let (status, _) = call(&h.app, "POST", "/eval", Some(json!({ "examples": [] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn serves_static_assets() {
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<h1>chat</h1>").unwrap();
    let h = harness(false, Some(assets.path()));
    let resp = h
        .app
        .clone()
        .oneshot(Request::builder().uri("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<h1>chat</h1>");
    let (status, _) = call(&h.app, "GET", "/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn missing_weights_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = AppState::open(ServiceConfig {
        weights: dir.path().join("absent.json"),
        dataset: dir.path().join("dataset.jsonl"),
        network: None,
        session_log: None,
        static_dir: None,
        train_on_feedback: false,
        intent_name: "testIntent".into(),
    })
    .err()
    .unwrap();
    assert!(err.to_string().contains("absent.json"));
}
