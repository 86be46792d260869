mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use metaqa_play::{read_log, router, Session, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn start(app: &Router, condition: &str, seed: u64) -> String {
    let (status, body) =
        call(app, "POST", "/sessions", Some(json!({"user_id": "u", "condition": condition, "seed": seed}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn status_codes_and_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(common::persistent(dir.path())));
    let id = start(&app, "answeronly", 4).await;

    let (status, view) = call(&app, "GET", &format!("/sessions/{id}/current"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["status"], "active");
    assert_eq!(view["total"], 30);
    assert_eq!(view["question"]["reveal_limit"], 20);

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/reveal"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "revealed");
    assert_eq!(body["candidate"]["left"], "");
    assert!(body["candidate"].get("score").is_none());

    let (status, body) =
        call(&app, "POST", &format!("/sessions/{id}/rewrite"), Some(json!({"text": "who", "backend": "stub"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("rewrites not permitted"));

    let (status, _) =
        call(&app, "POST", &format!("/sessions/{id}/submit"), Some(json!({"decision": "select", "index": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/submit"), Some(json!({"decision": "maybe"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"user_id": "u"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let submit = json!({"decision": "select", "index": 0, "idempotency_key": "once"});
    let (status, first) = call(&app, "POST", &format!("/sessions/{id}/submit"), Some(submit.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["decision"]["type"], "select");
    let (status, again) = call(&app, "POST", &format!("/sessions/{id}/submit"), Some(submit)).await;
    assert_eq!((status, &again), (StatusCode::OK, &first));
    let qid = first["question_id"].clone();
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/submit"),
        Some(json!({"decision": "abstain", "question_id": qid})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(log["episodes"].as_array().unwrap().len(), 1);
    assert_eq!(log["episodes"][0]["actions"][0]["action"], "reveal");

    let (status, _) = call(&app, "GET", "/sessions/nope/current", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rewrite_over_http() {
    let corpus = common::corpus();
    let service = metaqa_play::Service::in_memory(corpus.clone(), metaqa_play::Backends::standard(corpus));
    let app = router(Arc::new(service));
    let id = start(&app, "rewriteques", 0).await;
    let text = "Who did Jesse McCartney play in Horton Hears a Who";
    let (status, body) =
        call(&app, "POST", &format!("/sessions/{id}/rewrite"), Some(json!({"text": text, "backend": "stub"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["outcome"]["ok"]["candidates"][0]["answer"], "JoJo");
    let (status, body) =
        call(&app, "POST", &format!("/sessions/{id}/rewrite"), Some(json!({"text": "zzz", "backend": "stub"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert!(body["error"].is_string());
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/submit"), Some(json!({"decision": "abstain"}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_keep_separate_linear_logs() {
    let dir = tempfile::tempdir().unwrap();
    let service = Arc::new(common::persistent(dir.path()));
    let app = router(service.clone());
    let ids = [start(&app, "context", 1).await, start(&app, "answeronly", 2).await];

    let mut tasks = Vec::new();
    for i in 0..100usize {
        let app = app.clone();
        let id = ids[i % 2].clone();
        tasks.push(tokio::spawn(async move {
            let (method, path, body) = match i % 5 {
                0..=2 => ("POST", "reveal", None),
                3 => ("POST", "submit", Some(json!({"decision": "select", "index": 0}))),
                _ => ("POST", "submit", Some(json!({"decision": "abstain"}))),
            };
            let (status, body) = call(&app, method, &format!("/sessions/{id}/{path}"), body).await;
            (i % 2, path, status, body)
        }));
    }
    let mut mutations = [0usize; 2];
    let mut submits = [0usize; 2];
    for t in tasks {
        let (s, path, status, body) = t.await.unwrap();
        match (path, status) {
            ("reveal", StatusCode::OK) if body["status"] == "revealed" => mutations[s] += 1,
            ("reveal", StatusCode::OK) => {}
            ("submit", StatusCode::OK) => {
                mutations[s] += 1;
                submits[s] += 1;
            }
            ("submit", StatusCode::BAD_REQUEST) => {}
            other => panic!("unexpected {other:?} {body}"),
        }
    }

    let store = Store::open(dir.path()).unwrap();
    for (s, id) in ids.iter().enumerate() {
        let events = read_log(&store.session_path(id)).unwrap();
        assert_eq!(events.len(), mutations[s] + 1);
        assert!(events.iter().enumerate().all(|(i, e)| e.seq == i as u64));
        let replayed = Session::replay(&events, service.corpus()).unwrap();
        let live = service.snapshot(id).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(live.header.session_id, *id);
        assert_eq!(live.episodes.len(), submits[s]);
        for (ep, qid) in live.episodes.iter().zip(&live.header.questions) {
            assert_eq!(&ep.question_id, qid);
        }
    }
}
