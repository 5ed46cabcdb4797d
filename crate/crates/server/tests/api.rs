use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vibraforge::corpus::consonant_v;
use vibraforge::pattern::{create_chain_grid, PatternDocument, UnitKey, UnitRef, Waveform};
use vibraforge::service::{offline_frames, StateFrame};
use vibraforge::sim::LatencyModel;
use vibraforge_server::{router, AppState, Pacing};

fn app() -> Router {
    router(AppState::new(LatencyModel::default(), Pacing::Unpaced))
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
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn grid_4x6() -> PatternDocument {
    let mut doc = PatternDocument::new("grid");
    for r in 0..4 {
        create_chain_grid(&mut doc, 6, (0.0, f64::from(r)), 1.0).unwrap();
    }
    doc
}

#[tokio::test]
async fn pattern_crud() {
    let app = app();
    let (status, created) = call(&app, "POST", "/patterns", Some(serde_json::to_value(grid_4x6()).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_owned();
    assert_eq!(created["version"], 1);

    let (status, list) = call(&app, "GET", "/patterns", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["units"], 24);

    let mut bad = grid_4x6();
    bad.chains[0].units = (0..17).map(|a| UnitRef { address: a, canvas_x: 0.0, canvas_y: 0.0 }).collect();
    let (status, err) = call(&app, "PUT", &format!("/patterns/{id}"), Some(json!({"version": 1, "document": bad}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "validation");
    assert!(err["field"].is_string());

    let (status, updated) =
        call(&app, "PUT", &format!("/patterns/{id}"), Some(json!({"version": 1, "document": consonant_v()}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(updated["version"], 2);

    let (status, err) =
        call(&app, "PUT", &format!("/patterns/{id}"), Some(json!({"version": 1, "document": grid_4x6()}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "conflict");

    let (status, compiled) = call(&app, "POST", &format!("/patterns/{id}/compile"), None).await;
    assert_eq!(status, StatusCode::OK);
    let stops = compiled["commands"].as_array().unwrap().iter().filter(|c| c["action"] == "stop").count();
    assert_eq!(stops, 4);
    assert!(compiled["text"].as_str().unwrap().ends_with("400 3 5 stop\n"));

    let (status, _) = call(&app, "DELETE", &format!("/patterns/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, err) = call(&app, "GET", &format!("/patterns/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
}

#[tokio::test]
async fn malformed_json_is_a_client_error() {
    let app = app();
    let req = Request::builder()
        .method("POST")
        .uri("/patterns")
        .header("content-type", "application/json")
        .body(Body::from("{\"chains\": 3"))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.status().is_client_error());
}

#[tokio::test]
async fn waveform_library() {
    let app = app();
    let beat = Waveform::product(vec![Waveform::sine(300.0), Waveform::sine(8.0)]);
    let (status, _) = call(&app, "PUT", "/waveforms/Consonant_V", Some(serde_json::to_value(&beat).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, names) = call(&app, "GET", "/waveforms", None).await;
    assert_eq!(names, json!(["Consonant_V"]));

    let (status, samples) = call(&app, "GET", "/waveforms/Consonant_V/samples?rate_hz=2000&duration_ms=100", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(samples["samples"].as_array().unwrap().len(), 200);
    let (status, err) = call(&app, "GET", "/waveforms/Consonant_V/samples?rate_hz=400&duration_ms=100", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["field"], "rate_hz");

    let req = Request::builder()
        .method("POST")
        .uri("/waveforms/import?name=tri")
        .body(Body::from(r#"{"amplitude": [[0, 0], [100, 1], [400, 0]]}"#))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::CREATED);
    let req = Request::builder()
        .method("POST")
        .uri("/waveforms/import?name=loud")
        .body(Body::from(r#"{"amplitude": [[0, 1.5]]}"#))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::UNPROCESSABLE_ENTITY);
    let (_, names) = call(&app, "GET", "/waveforms", None).await;
    assert_eq!(names, json!(["Consonant_V", "tri"]));
}

async fn session_for(app: &Router, doc: &PatternDocument) -> String {
    let (_, created) = call(app, "POST", "/patterns", Some(serde_json::to_value(doc).unwrap())).await;
    let (status, session) = call(app, "POST", "/sessions", Some(json!({"pattern_id": created["id"]}))).await;
    assert_eq!(status, StatusCode::CREATED);
    session["id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn scrub_matches_timeline() {
    let app = app();
    let id = session_for(&app, &consonant_v()).await;
    let (status, at0) = call(&app, "GET", &format!("/sessions/{id}/scrub?t_ms=0"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(at0["units"].as_array().unwrap().len(), 4);
    let (_, at200) = call(&app, "POST", &format!("/sessions/{id}/scrub"), Some(json!({"t_ms": 200}))).await;
    assert_eq!(at200["units"][0], json!({"chain": 0, "address": 5}));
    let (_, end) = call(&app, "GET", &format!("/sessions/{id}/scrub?t_ms=400"), None).await;
    assert!(end["units"].as_array().unwrap().is_empty());
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/scrub?t_ms=-1"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "GET", "/sessions/nope/scrub?t_ms=0", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

/// Opens the frame stream, runs `start`, and collects events until `complete`.
async fn stream_events(app: &Router, id: &str, start: impl AsyncFnOnce()) -> Vec<(String, Value)> {
    let req = Request::builder().uri(format!("/sessions/{id}/frames")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    start().await;
    let mut buf = String::new();
    let mut events = Vec::new();
    loop {
        let frame = body.frame().await.unwrap().unwrap();
        let Ok(chunk) = frame.into_data() else { continue };
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut name = String::new();
            let mut data = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event: ") {
                    name = v.to_owned();
                } else if let Some(v) = line.strip_prefix("data: ") {
                    data = v.to_owned();
                }
            }
            if name.is_empty() {
                continue;
            }
            let done = name == "complete";
            events.push((name, serde_json::from_str(&data).unwrap()));
            if done {
                return events;
            }
        }
    }
}

#[tokio::test]
async fn playback_stream_equals_offline_trace() {
    let app = app();
    let doc = consonant_v();
    let id = session_for(&app, &doc).await;
    let events = stream_events(&app, &id, async || {
        let (status, info) = call(&app, "POST", &format!("/sessions/{id}/play"), Some(json!({"from_ms": 0}))).await;
        assert_eq!(status, StatusCode::ACCEPTED);
        assert_eq!(info["state"], "playing");
    })
    .await;
    let frames: Vec<StateFrame> = events
        .iter()
        .filter(|(n, _)| n == "frame")
        .map(|(_, v)| serde_json::from_value(v.clone()).unwrap())
        .collect();
    assert_eq!(frames, offline_frames(&doc, 0, LatencyModel::default()).unwrap());
    let active_at = |t: u64| {
        frames
            .iter()
            .find(|f| f.t_ms == t)
            .map(|f| f.units.iter().filter(|u| u.active).map(|u| (u.chain, u.addr)).collect::<Vec<_>>())
            .unwrap()
    };
    assert!(active_at(0).is_empty());
    assert_eq!(active_at(200), vec![(0, 5), (1, 5), (2, 5), (3, 5)]);
    assert!(frames.last().unwrap().units.iter().all(|u| !u.active));

    let (_, info) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(info["state"], "complete");
}

#[tokio::test]
async fn empty_pattern_completes_immediately() {
    let app = app();
    let id = session_for(&app, &grid_4x6()).await;
    let events = stream_events(&app, &id, async || {
        call(&app, "POST", &format!("/sessions/{id}/play"), None).await;
    })
    .await;
    assert_eq!(events.len(), 2);
    assert_eq!(events[1], ("complete".to_owned(), json!({"t_ms": 0})));
}

#[tokio::test]
async fn stop_clears_every_unit() {
    let state = AppState::new(LatencyModel::default(), Pacing::RealTime);
    let app = router(Arc::clone(&state));
    let mut doc = grid_4x6();
    doc.waveform_library.insert("long".into(), Waveform::sine(200.0));
    for c in 0..4 {
        for a in 0..6 {
            doc.assign(UnitKey { chain: c, address: a }, "long", 0, 1_000);
        }
    }
    let id = session_for(&app, &doc).await;
    let events = stream_events(&app, &id, async || {
        call(&app, "POST", &format!("/sessions/{id}/play"), None).await;
        let (status, _) = call(&app, "POST", &format!("/sessions/{id}/play"), None).await;
        assert_eq!(status, StatusCode::CONFLICT);
        tokio::time::sleep(std::time::Duration::from_millis(200)).await;
        let (_, info) = call(&app, "POST", &format!("/sessions/{id}/stop"), None).await;
        assert_eq!(info["state"], "stopping");
    })
    .await;
    let frames: Vec<StateFrame> = events
        .iter()
        .filter(|(n, _)| n == "frame")
        .map(|(_, v)| serde_json::from_value(v.clone()).unwrap())
        .collect();
    assert!(frames.iter().any(|f| f.units.iter().filter(|u| u.active).count() == 24));
    assert!(frames.last().unwrap().units.iter().all(|u| !u.active));
    assert!(frames.last().unwrap().t_ms < 1_000);
}

#[tokio::test]
async fn scrub_equals_timeline_for_varied_documents() {
    let app = app();
    for seed in 0..20u64 {
        let mut doc = PatternDocument::new(format!("doc{seed}"));
        let chains = 1 + seed % 4;
        for c in 0..chains {
            create_chain_grid(&mut doc, 1 + ((seed + c) % 6) as usize, (0.0, c as f64), 1.0).unwrap();
        }
        doc.waveform_library.insert("w".into(), Waveform::sine(200.0));
        for c in 0..chains {
            let len = doc.chains[c as usize].units.len() as u64;
            for a in 0..len {
                let start = (seed * 37 + c * 11 + a * 23) % 300;
                doc.assign(UnitKey { chain: c as u8, address: a as u8 }, "w", start, start + 20 + (a * 41 + seed) % 200);
            }
        }
        let id = session_for(&app, &doc).await;
        for t in (0..=doc.duration_ms()).step_by(7) {
            let (status, got) = call(&app, "GET", &format!("/sessions/{id}/scrub?t_ms={t}"), None).await;
            assert_eq!(status, StatusCode::OK);
            let expected: Vec<UnitKey> = vibraforge::pattern::active_units_at(&doc, t as f64).into_iter().collect();
            assert_eq!(got["units"], serde_json::to_value(expected).unwrap(), "doc {seed} t {t}");
        }
    }
}
