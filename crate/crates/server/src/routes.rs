use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;
use vibraforge::pattern::{compile, format_commands, import_keyframes, sample, PatternDocument, TimedCommand, UnitKey, Waveform};
use vibraforge::service::{scrub, Playback, ServiceError, SessionInfo, StoredPattern};
use vibraforge::transport::schedule;

use crate::{drive_playback, ApiError, AppState, StreamEvent};

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/patterns", get(list_patterns).post(create_pattern))
        .route("/patterns/{id}", get(get_pattern).put(update_pattern).delete(delete_pattern))
        .route("/patterns/{id}/compile", post(compile_pattern))
        .route("/waveforms", get(list_waveforms))
        .route("/waveforms/import", post(import_waveform))
        .route("/waveforms/{name}", get(get_waveform).put(put_waveform).delete(delete_waveform))
        .route("/waveforms/{name}/samples", get(sample_waveform))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/play", post(play))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/scrub", get(scrub_query).post(scrub_body))
        .route("/sessions/{id}/frames", get(frames))
        .with_state(state)
}

async fn list_patterns(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.patterns().list())
}

async fn create_pattern(State(s): State<Shared>, Json(doc): Json<PatternDocument>) -> ApiResult<impl IntoResponse> {
    let stored = s.patterns().create(doc)?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn get_pattern(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<StoredPattern>> {
    Ok(Json(s.patterns().get(&id)?.clone()))
}

#[derive(Deserialize)]
struct UpdateRequest {
    version: u64,
    document: PatternDocument,
}

async fn update_pattern(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<UpdateRequest>,
) -> ApiResult<Json<StoredPattern>> {
    Ok(Json(s.patterns().update(&id, req.version, req.document)?))
}

async fn delete_pattern(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.patterns().delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
struct CompileResponse {
    version: u64,
    commands: Vec<TimedCommand>,
    /// The same commands in the line format.
    text: String,
    packets: usize,
    spills: usize,
}

async fn compile_pattern(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<CompileResponse>> {
    let stored = s.patterns().get(&id)?.clone();
    let commands = compile(&stored.document)?;
    let plan = schedule(&commands);
    Ok(Json(CompileResponse {
        version: stored.version,
        text: format_commands(&commands),
        packets: plan.packets.len(),
        spills: plan.spills.len(),
        commands,
    }))
}

async fn list_waveforms(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.waveforms().names())
}

async fn get_waveform(State(s): State<Shared>, Path(name): Path<String>) -> ApiResult<Json<Waveform>> {
    Ok(Json(s.waveforms().get(&name)?.clone()))
}

async fn put_waveform(
    State(s): State<Shared>,
    Path(name): Path<String>,
    Json(w): Json<Waveform>,
) -> ApiResult<impl IntoResponse> {
    s.waveforms().put(&name, w.clone())?;
    Ok(Json(w))
}

async fn delete_waveform(State(s): State<Shared>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    s.waveforms().delete(&name)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct ImportQuery {
    name: String,
}

async fn import_waveform(
    State(s): State<Shared>,
    Query(q): Query<ImportQuery>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let w = import_keyframes(&body)?;
    s.waveforms().put(&q.name, w.clone())?;
    Ok((StatusCode::CREATED, Json(w)))
}

#[derive(Deserialize)]
struct SampleQuery {
    rate_hz: f64,
    duration_ms: f64,
}

#[derive(Serialize)]
struct SampleResponse {
    rate_hz: f64,
    samples: Vec<f64>,
}

async fn sample_waveform(
    State(s): State<Shared>,
    Path(name): Path<String>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<Json<SampleResponse>> {
    let w = s.waveforms().get(&name)?.clone();
    let sampled = sample(&w, q.rate_hz, q.duration_ms)?;
    Ok(Json(SampleResponse {
        rate_hz: sampled.sample_rate_hz,
        samples: sampled.samples,
    }))
}

async fn list_sessions(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.sessions().list())
}

#[derive(Deserialize)]
struct CreateSession {
    pattern_id: String,
}

async fn create_session(State(s): State<Shared>, Json(req): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    s.patterns().get(&req.pattern_id)?;
    let info = s.sessions().create(&req.pattern_id).info();
    s.stream(&info.id);
    Ok((StatusCode::CREATED, Json(info)))
}

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(s.sessions().get(&id)?.info()))
}

async fn delete_session(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.sessions().remove(&id)?;
    s.drop_stream(&id);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize, Default)]
struct PlayRequest {
    #[serde(default)]
    from_ms: u64,
}

async fn play(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<PlayRequest>>,
) -> ApiResult<impl IntoResponse> {
    let from_ms = body.map(|Json(b)| b.from_ms).unwrap_or_default();
    let (pattern_id, latency) = {
        let sessions = s.sessions();
        let session = sessions.get(&id)?;
        session.ensure_idle()?;
        (session.pattern_id().to_owned(), session.latency())
    };
    let doc = s.patterns().get(&pattern_id)?.document.clone();
    // compiling can take a while; no lock is held meanwhile
    let playback = tokio::task::spawn_blocking(move || Playback::start(&doc, from_ms, latency))
        .await
        .map_err(ServiceError::internal)??;
    let info = {
        let mut sessions = s.sessions();
        let session = sessions.get_mut(&id)?;
        session.begin(playback)?;
        session.info()
    };
    tokio::spawn(drive_playback(s.clone(), id));
    Ok((StatusCode::ACCEPTED, Json(info)))
}

async fn stop(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let mut sessions = s.sessions();
    let session = sessions.get_mut(&id)?;
    session.stop();
    Ok(Json(session.info()))
}

#[derive(Deserialize)]
struct ScrubRequest {
    t_ms: f64,
}

#[derive(Serialize)]
struct ScrubResponse {
    t_ms: f64,
    units: Vec<UnitKey>,
}

fn scrub_session(s: &AppState, id: &str, t_ms: f64) -> ApiResult<Json<ScrubResponse>> {
    let pattern_id = s.sessions().get(id)?.pattern_id().to_owned();
    let doc = s.patterns().get(&pattern_id)?.document.clone();
    let units = scrub(&doc, t_ms)?.into_iter().collect();
    Ok(Json(ScrubResponse { t_ms, units }))
}

async fn scrub_query(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ScrubRequest>,
) -> ApiResult<Json<ScrubResponse>> {
    scrub_session(&s, &id, q.t_ms)
}

async fn scrub_body(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(q): Json<ScrubRequest>,
) -> ApiResult<Json<ScrubResponse>> {
    scrub_session(&s, &id, q.t_ms)
}

/// Server-sent events: `frame` messages carrying `{t_ms, units}` and a final
/// `complete` message. The stream stays open for later plays; it ends when
/// the session is deleted.
async fn frames(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    s.sessions().get(&id)?;
    let rx = s.stream(&id).subscribe();
    let events = stream::unfold(rx, |mut rx| async move {
        let ev = match rx.recv().await {
            Ok(ev) => to_sse(&ev),
            Err(RecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
            Err(RecvError::Closed) => return None,
        };
        Some((Ok(ev), rx))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

fn to_sse(ev: &StreamEvent) -> Event {
    let (name, data) = match ev {
        StreamEvent::Frame(f) => ("frame", serde_json::to_string(f)),
        StreamEvent::Complete { t_ms } => ("complete", serde_json::to_string(&serde_json::json!({ "t_ms": t_ms }))),
    };
    Event::default()
        .event(name)
        .data(data.expect("stream events serialize"))
}

