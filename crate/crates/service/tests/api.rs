use std::sync::Arc;
use std::time::Duration;

use axum::body::Body as HttpBody;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use maasim_service::{router, AppState, World, API_SCHEMA};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(world: World) -> (Arc<AppState>, Router) {
    let state = AppState::new(world, 20_000, Duration::from_secs(60));
    (state.clone(), router(state))
}

async fn call(r: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(HttpBody::from(body.unwrap_or("").to_string())).unwrap();
    let resp = r.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn check(def: &str, v: &Value) {
    let mut schema: Value = serde_json::from_str(API_SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{v}");
}

async fn create(r: &Router, nb: &str) -> (String, Value) {
    let (s, v) = call(r, "POST", "/sessions", Some(&json!({ "neighbourhood_id": nb }).to_string())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    check("Session", &v);
    (v["session_id"].as_str().unwrap().to_string(), v)
}

#[tokio::test]
async fn read_endpoints() {
    let (_, r) = app(World::demo(42).unwrap());
    let (s, v) = call(&r, "GET", "/health", None).await;
    assert_eq!((s, v.clone()), (StatusCode::OK, json!({ "status": "ok" })));
    check("Health", &v);

    let (s, v) = call(&r, "GET", "/actions", None).await;
    assert_eq!(s, StatusCode::OK);
    check("Actions", &v);
    let actions = v.as_array().unwrap();
    assert_eq!(actions.len(), 12);
    assert_eq!(actions.iter().filter(|a| a["kind"] == "indirect").count(), 1);

    let (s, v) = call(&r, "GET", "/neighbourhoods", None).await;
    assert_eq!(s, StatusCode::OK);
    check("Neighbourhoods", &v);
    assert_eq!(v.as_array().unwrap().len(), 1000);

    let (s, v) = call(&r, "GET", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    check("Error", &v);
}

#[tokio::test]
async fn session_creation() {
    let (state, r) = app(World::demo(42).unwrap());
    let (a, v) = create(&r, "NB0007").await;
    assert_eq!(v["state"]["turns"], 0);
    assert_eq!(v["state"]["neighbourhood_id"], "NB0007");
    for g in ["housing", "environment", "services", "healthcare", "leisure"] {
        assert!((v["state"]["groups"][g].as_f64().unwrap() - 1.0).abs() < 1e-12, "{g}");
    }
    let (b, _) = create(&r, "NB0007").await;
    assert_ne!(a, b);
    assert_eq!(state.session_count(), 2);

    let (s, v) = call(&r, "POST", "/sessions", Some(r#"{"neighbourhood_id":"nope"}"#)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    check("Error", &v);
    let (s, _) = call(&r, "GET", "/sessions/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_bodies_are_400() {
    let (_, r) = app(World::demo(42).unwrap());
    let (id, _) = create(&r, "NB0001").await;
    let cases = [
        ("/sessions", "{not json"),
        ("/sessions", r#"{"neighbourhood_id":"NB0001","extra":1}"#),
        ("/sessions", r#"{"neighbourhood":"NB0001"}"#),
        (&format!("/sessions/{id}/actions"), r#"{"action_id":"no-such-action"}"#),
        (&format!("/sessions/{id}/actions"), r#"{"action_id":3}"#),
        (&format!("/sessions/{id}/apply-plan"), r#"{"genome":"01"}"#),
        (&format!("/sessions/{id}/apply-plan"), r#"{"genome":"0120000000000"}"#),
        (&format!("/sessions/{id}/optimize"), r#"{"algorithm":"moead"}"#),
        (&format!("/sessions/{id}/optimize"), r#"{"algorithm":"nsga2","evaluations":10}"#),
    ];
    for (uri, body) in cases {
        let (s, v) = call(&r, "POST", uri, Some(body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri} {body}: {v}");
        check("Error", &v);
    }
    let (s, v) = call(&r, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"]["turns"], 0);
}

#[tokio::test]
async fn actions_undo_and_plans() {
    let (_, r) = app(World::demo(42).unwrap());
    let (id, fresh) = create(&r, "NB0002").await;
    let path = |tail: &str| format!("/sessions/{id}/{tail}");
    let (_, actions) = call(&r, "GET", "/actions", None).await;
    let first = actions[0]["id"].as_str().unwrap().to_string();

    let play = json!({ "action_id": first }).to_string();
    let (s, v) = call(&r, "POST", &path("actions"), Some(&play)).await;
    assert_eq!(s, StatusCode::OK);
    check("Session", &v);
    assert_eq!(v["state"]["turns"], 1);
    // Not idempotent.
    let (_, v) = call(&r, "POST", &path("actions"), Some(&play)).await;
    assert_eq!(v["state"]["turns"], 2);
    assert_eq!(v["state"]["history"], json!([first, first]));

    call(&r, "POST", &path("undo"), None).await;
    let (s, v) = call(&r, "POST", &path("undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"], fresh["state"]);
    let (s, v) = call(&r, "POST", &path("undo"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    check("Error", &v);

    let (s, v) = call(&r, "POST", &path("apply-plan"), Some(r#"{"genome":"101000000011"}"#)).await;
    assert_eq!(s, StatusCode::OK);
    let (_, got) = call(&r, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(got["state"]["turns"], 4);
    assert_eq!(got, v);
}

#[tokio::test]
async fn optimize_is_deterministic_and_read_only() {
    let (_, r) = app(World::demo(42).unwrap());
    let (id, before) = create(&r, "NB0003").await;
    let body = r#"{"algorithm":"epsmoea","evaluations":10000,"seed":7}"#;
    let (s, a) = call(&r, "POST", &format!("/sessions/{id}/optimize"), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    check("Optimize", &a);
    let (_, b) = call(&r, "POST", &format!("/sessions/{id}/optimize"), Some(body)).await;
    assert_eq!(a, b);
    let sols = a["solutions"].as_array().unwrap();
    assert!(!sols.is_empty());
    for w in sols.windows(2) {
        let (t0, t1) = (w[0]["turns"].as_u64().unwrap(), w[1]["turns"].as_u64().unwrap());
        assert!(t0 < t1 || (t0 == t1 && w[0]["score"].as_f64() >= w[1]["score"].as_f64()));
    }
    for sol in sols {
        assert_eq!(sol["action_ids"].as_array().unwrap().len() as u64, sol["turns"].as_u64().unwrap());
    }
    let (_, after) = call(&r, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(after, before);

    let (s, v) = call(&r, "POST", &format!("/sessions/{id}/optimize"), Some(r#"{"algorithm":"nsga2","evaluations":1000000000}"#)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    check("Error", &v);
}

#[tokio::test]
async fn toy_world_returns_the_oracle_front() {
    let (_, r) = app(World::toy().unwrap());
    let (id, _) = create(&r, "toy").await;
    for alg in ["nsga2", "paes", "spea2", "epsmoea"] {
        let body = json!({ "algorithm": alg, "evaluations": 1000, "seed": 1 }).to_string();
        let (s, v) = call(&r, "POST", &format!("/sessions/{id}/optimize"), Some(&body)).await;
        assert_eq!(s, StatusCode::OK);
        let pts: Vec<(f64, u64)> =
            v["solutions"].as_array().unwrap().iter().map(|x| (x["score"].as_f64().unwrap(), x["turns"].as_u64().unwrap())).collect();
        assert_eq!(pts, vec![(3.5, 1), (3.6, 2)], "{alg}");
        assert_eq!(v["solutions"][0]["action_ids"], json!(["A"]));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_independent() {
    let (state, r) = app(World::demo(42).unwrap());
    let (_, actions) = call(&r, "GET", "/actions", None).await;
    let ids: Vec<String> = actions.as_array().unwrap().iter().map(|a| a["id"].as_str().unwrap().to_string()).collect();

    let mut tasks = Vec::new();
    for k in 0..10usize {
        let r = r.clone();
        let ids = ids.clone();
        tasks.push(tokio::spawn(async move {
            let (sid, fresh) = create(&r, &format!("NB{:04}", 10 + k)).await;
            let n = k + 1;
            for step in 0..n {
                let body = json!({ "action_id": ids[(k + step) % ids.len()] }).to_string();
                let (s, v) = call(&r, "POST", &format!("/sessions/{sid}/actions"), Some(&body)).await;
                assert_eq!(s, StatusCode::OK);
                assert_eq!(v["state"]["turns"].as_u64().unwrap() as usize, step + 1);
            }
            let (_, v) = call(&r, "GET", &format!("/sessions/{sid}"), None).await;
            check("Session", &v);
            assert_eq!(v["state"]["turns"].as_u64().unwrap() as usize, n);
            assert_eq!(v["state"]["history"].as_array().unwrap().len(), n);
            assert_eq!(v["state"]["neighbourhood_id"], fresh["state"]["neighbourhood_id"]);
            for _ in 0..n {
                call(&r, "POST", &format!("/sessions/{sid}/undo"), None).await;
            }
            let (_, v) = call(&r, "GET", &format!("/sessions/{sid}"), None).await;
            assert_eq!(v["state"], fresh["state"]);
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    assert_eq!(state.session_count(), 10);
}
