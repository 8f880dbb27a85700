use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use teamforge::server::router;
use teamforge_core::SessionStore;
use tower::ServiceExt;

const ROSTER: &str = include_str!("fixtures/roster12.json");
const SPEC: &str = include_str!("fixtures/spec12.json");

fn fixture_request(bandit: Value) -> Value {
    json!({
        "roster": serde_json::from_str::<Value>(ROSTER).unwrap(),
        "spec": serde_json::from_str::<Value>(SPEC).unwrap(),
        "evolve_config": {"population_size": 24, "generations": 15, "rng_seed": 5},
        "bandit_params": bandit,
    })
}

async fn call_raw(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Vec<u8>>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(
        app,
        method,
        uri,
        body.map(|b| serde_json::to_vec(&b).unwrap()),
    )
    .await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn evolved_session(app: &Router, bandit: Value) -> String {
    let (status, body) = call(
        app,
        Method::POST,
        "/sessions",
        Some(fixture_request(bandit)),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = body["session_id"].as_str().unwrap().to_owned();
    let (status, body) = call(app, Method::POST, &format!("/sessions/{id}/evolve"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(body["archive_size"].as_u64().unwrap() >= 1);
    assert!(body["arm_count"].as_u64().unwrap() >= 1);
    id
}

fn app() -> (Router, Arc<SessionStore>) {
    let store = Arc::new(SessionStore::in_memory());
    (router(Arc::clone(&store)), store)
}

#[tokio::test]
async fn healthz() {
    let (app, _) = app();
    let (status, _) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn full_session_over_http() {
    let (app, _) = app();
    let id = evolved_session(&app, json!({"round_budget": 6})).await;

    let (_, archive) = call(&app, Method::GET, &format!("/sessions/{id}/archive"), None).await;
    let entries = archive["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries[0]["member_ids"].is_array());
    assert!(entries[0]["objectives"]["cohesion"].is_f64());

    let (status, rec) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/recommendation"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(rec["error_code"], "WrongPhase");

    let mut rounds = 0;
    loop {
        let uri = format!("/sessions/{id}/round");
        let (status, first) = call_raw(&app, Method::GET, &uri, None).await;
        assert_eq!(status, StatusCode::OK);
        let (_, second) = call_raw(&app, Method::GET, &uri, None).await;
        assert_eq!(first, second, "round reads must be idempotent");
        let round: Value = serde_json::from_slice(&first).unwrap();
        let teams = round["teams"].as_array().unwrap();
        assert_eq!(teams.len(), 3);
        assert_eq!(teams[0]["member_ids"].as_array().unwrap().len(), 4);
        assert_eq!(teams[0]["member_names"].as_array().unwrap().len(), 4);
        let choice = if rounds % 3 == 2 {
            json!("skip")
        } else {
            teams[1]["arm_index"].clone()
        };
        let body = json!({"nonce": round["nonce"], "choice": choice});
        let (status, outcome) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/choice"),
            Some(body.clone()),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{outcome}");
        rounds += 1;
        assert_eq!(outcome["rounds_used"], rounds);

        // a retried submission is rejected
        let (status, err) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/choice"),
            Some(body),
        )
        .await;
        assert_eq!(status, StatusCode::CONFLICT);
        let expected = if outcome["phase"] == "recommended" {
            "WrongPhase"
        } else {
            "StaleNonce"
        };
        assert_eq!(err["error_code"], expected);

        if outcome["phase"] == "recommended" {
            break;
        }
        assert_eq!(outcome["phase"], "eliciting");
    }
    assert_eq!(rounds, 6);

    let (status, rec) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/recommendation"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["rounds_used"], 6);
    assert_eq!(rec["team"].as_array().unwrap().len(), 4);
    let pulls: u64 = rec["arms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["pulls"].as_u64().unwrap())
        .sum();
    assert_eq!(pulls, 18);

    let (status, err) = call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error_code"], "SessionTerminal");
}

#[tokio::test]
async fn validation_errors_are_structured() {
    let (app, _) = app();
    let mut too_big = fixture_request(json!({}));
    too_big["spec"]["team_size"] = json!(13);
    let (status, err) = call(&app, Method::POST, "/sessions", Some(too_big)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "SpecTooLarge");
    assert_eq!(err["field"], "spec.team_size");

    let mut dup = fixture_request(json!({}));
    let first = dup["roster"]["members"][0].clone();
    dup["roster"]["members"].as_array_mut().unwrap().push(first);
    let (status, err) = call(&app, Method::POST, "/sessions", Some(dup)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "DuplicateMember");
    assert!(err["message"].as_str().unwrap().contains("m01"));

    let (status, err) =
        call_raw(&app, Method::POST, "/sessions", Some(b"{not json".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: Value = serde_json::from_slice(&err).unwrap();
    assert_eq!(err["error_code"], "MalformedDocument");

    let mut bad_params = fixture_request(json!({"presentation_size": 0}));
    bad_params["evolve_config"] = json!({});
    let (status, err) = call(&app, Method::POST, "/sessions", Some(bad_params)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "InvalidConfig");
}

#[tokio::test]
async fn phase_and_lookup_errors() {
    let (app, _) = app();
    let (status, err) = call(&app, Method::GET, "/sessions/nope/round", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error_code"], "UnknownSession");

    let (_, body) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(fixture_request(json!({}))),
    )
    .await;
    let id = body["session_id"].as_str().unwrap().to_owned();
    let (status, err) = call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error_code"], "WrongPhase");
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/archive"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    call(&app, Method::POST, &format!("/sessions/{id}/evolve"), None).await;
    let (status, err) = call(&app, Method::POST, &format!("/sessions/{id}/evolve"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error_code"], "WrongPhase");

    let (_, round) = call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
    let shown: Vec<u64> = round["teams"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["arm_index"].as_u64().unwrap())
        .collect();
    let hidden = (0..8).find(|a| !shown.contains(a)).unwrap();
    let body = json!({"nonce": round["nonce"], "choice": hidden});
    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/choice"),
        Some(body),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "ChoiceNotPresented");

    let body = json!({"nonce": "0000", "choice": shown[0]});
    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/choice"),
        Some(body),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error_code"], "StaleNonce");

    let body = json!({"nonce": round["nonce"], "choice": "maybe"});
    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/choice"),
        Some(body),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "MalformedDocument");
}

#[tokio::test]
async fn same_inputs_give_same_archive() {
    let (app, _) = app();
    let a = evolved_session(&app, json!({})).await;
    let b = evolved_session(&app, json!({})).await;
    let (_, x) = call_raw(&app, Method::GET, &format!("/sessions/{a}/archive"), None).await;
    let (_, y) = call_raw(&app, Method::GET, &format!("/sessions/{b}/archive"), None).await;
    assert_eq!(x, y);
}

#[tokio::test]
async fn count_condition_ends_the_session() {
    // With one team per slate the pull-ratio rule can fire. Before every
    // submission the test checks the inequality itself and predicts whether
    // this choice ends the session.
    let (app, store) = app();
    let id = evolved_session(&app, json!({"presentation_size": 1, "round_budget": 400})).await;
    let mut fired = false;
    for _ in 0..400 {
        let (_, round) = call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
        let arm = round["teams"][0]["arm_index"].as_u64().unwrap() as usize;
        let snapshot = store.snapshot(&id).unwrap();
        let bandit = snapshot.bandit().unwrap();
        let lambda = 1.0 + 10.0 / bandit.arm_count() as f64;
        let mut pulls = bandit.pulls().to_vec();
        pulls[arm] += 1;
        let others: u64 = pulls.iter().sum::<u64>() - pulls[arm];
        let predicted = pulls[arm] as f64 >= (1.0 + lambda * others as f64) * (1.0 - 1e-12);
        let budget_hit = bandit.rounds() + 1 == 400;

        // the user only ever takes arm 0
        let choice = if arm == 0 { json!(0) } else { json!("skip") };
        let body = json!({"nonce": round["nonce"], "choice": choice});
        let (_, outcome) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/choice"),
            Some(body),
        )
        .await;
        let ended = outcome["phase"] == "recommended";
        assert_eq!(ended, predicted || budget_hit, "arm {arm}, pulls {pulls:?}");
        if ended {
            assert!(
                predicted,
                "expected the pull-ratio rule to fire before the budget"
            );
            let (_, rec) = call(
                &app,
                Method::GET,
                &format!("/sessions/{id}/recommendation"),
                None,
            )
            .await;
            assert_eq!(arm, 0);
            assert_eq!(rec["team"], round["teams"][0]["member_ids"]);
            fired = true;
            break;
        }
    }
    assert!(fired);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_keep_counts_consistent() {
    let (app, store) = app();
    let id = evolved_session(&app, json!({"round_budget": 10_000})).await;
    let mut tasks = Vec::new();
    for worker in 0..8u64 {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let mut accepted = 0u64;
            for i in 0..25u64 {
                let (_, round) =
                    call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
                let pick = (worker + i) as usize % 3;
                let body =
                    json!({"nonce": round["nonce"], "choice": round["teams"][pick]["arm_index"]});
                let (status, _) = call(
                    &app,
                    Method::POST,
                    &format!("/sessions/{id}/choice"),
                    Some(body),
                )
                .await;
                match status {
                    StatusCode::OK => accepted += 1,
                    StatusCode::CONFLICT => {}
                    other => panic!("unexpected status {other}"),
                }
            }
            accepted
        }));
    }
    let mut accepted = 0;
    for t in tasks {
        accepted += t.await.unwrap();
    }
    let session = store.snapshot(&id).unwrap();
    let bandit = session.bandit().unwrap();
    assert!(accepted >= 1);
    assert_eq!(bandit.rounds(), accepted);
    assert_eq!(bandit.pulls().iter().sum::<u64>(), 3 * accepted);
    assert!(bandit.wins().iter().sum::<u64>() == accepted);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(SessionStore::with_data_dir(dir.path()).unwrap());
    let app = router(Arc::clone(&store));
    let id = evolved_session(&app, json!({"round_budget": 4})).await;
    for _ in 0..4 {
        let (_, round) = call(&app, Method::GET, &format!("/sessions/{id}/round"), None).await;
        let body = json!({"nonce": round["nonce"], "choice": round["teams"][0]["arm_index"]});
        call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/choice"),
            Some(body),
        )
        .await;
    }
    let (_, live) = call_raw(
        &app,
        Method::GET,
        &format!("/sessions/{id}/recommendation"),
        None,
    )
    .await;
    assert!(dir.path().join(format!("{id}.ndjson")).exists());

    let restarted = router(Arc::new(SessionStore::with_data_dir(dir.path()).unwrap()));
    let (status, replayed) = call_raw(
        &restarted,
        Method::GET,
        &format!("/sessions/{id}/recommendation"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(live, replayed);
}
