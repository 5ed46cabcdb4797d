//! HTTP front end for the pattern store and playback sessions.
//!
//! JSON over HTTP for CRUD, compile, play, stop and scrub; server-sent
//! events for the 30 Hz state-frame stream. Payloads are described in
//! `docs/api.md`.

mod error;
mod routes;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::Serialize;
use tokio::sync::broadcast;
use vibraforge::service::{PatternStore, Sessions, StateFrame, FRAME_RATE_HZ};
use vibraforge::sim::LatencyModel;

pub use error::ApiError;
pub use routes::router;

/// Messages on a session's frame stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StreamEvent {
    Frame(StateFrame),
    Complete { t_ms: u64 },
}

/// How fast playback frames are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// One frame every 1/30 s of wall time.
    RealTime,
    /// As fast as the simulator runs; used by tests and batch clients.
    Unpaced,
}

pub struct AppState {
    pub(crate) patterns: Mutex<PatternStore>,
    pub(crate) waveforms: Mutex<vibraforge::service::WaveformLibrary>,
    pub(crate) sessions: Mutex<Sessions>,
    pub(crate) streams: Mutex<BTreeMap<String, broadcast::Sender<StreamEvent>>>,
    pub(crate) pacing: Pacing,
}

/// Frames buffered per subscriber before it starts missing some.
const STREAM_CAPACITY: usize = 4096;

impl AppState {
    pub fn new(latency: LatencyModel, pacing: Pacing) -> Arc<Self> {
        Arc::new(Self {
            patterns: Mutex::new(PatternStore::new()),
            waveforms: Mutex::new(Default::default()),
            sessions: Mutex::new(Sessions::new(latency)),
            streams: Mutex::new(BTreeMap::new()),
            pacing,
        })
    }

    pub(crate) fn patterns(&self) -> MutexGuard<'_, PatternStore> {
        self.patterns.lock().expect("pattern store lock")
    }

    pub(crate) fn waveforms(&self) -> MutexGuard<'_, vibraforge::service::WaveformLibrary> {
        self.waveforms.lock().expect("waveform library lock")
    }

    pub(crate) fn sessions(&self) -> MutexGuard<'_, Sessions> {
        self.sessions.lock().expect("session lock")
    }

    pub(crate) fn stream(&self, session: &str) -> broadcast::Sender<StreamEvent> {
        self.streams
            .lock()
            .expect("stream lock")
            .entry(session.to_owned())
            .or_insert_with(|| broadcast::channel(STREAM_CAPACITY).0)
            .clone()
    }

    pub(crate) fn drop_stream(&self, session: &str) {
        self.streams.lock().expect("stream lock").remove(session);
    }
}

/// Pulls frames from a playing session and broadcasts them until it completes.
pub(crate) async fn drive_playback(state: Arc<AppState>, session: String) {
    let tx = state.stream(&session);
    let mut ticker = tokio::time::interval(Duration::from_micros(1_000_000 / FRAME_RATE_HZ));
    let mut last_t = 0;
    loop {
        if state.pacing == Pacing::RealTime {
            ticker.tick().await;
        } else {
            tokio::task::yield_now().await;
        }
        let frame = match state.sessions().get_mut(&session) {
            Ok(s) => s.next_frame(),
            Err(_) => return,
        };
        match frame {
            Some(f) => {
                last_t = f.t_ms;
                // no subscribers is fine; the session still advances
                let _ = tx.send(StreamEvent::Frame(f));
            }
            None => {
                let _ = tx.send(StreamEvent::Complete { t_ms: last_t });
                return;
            }
        }
    }
}

pub async fn serve(port: u16, latency: LatencyModel) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(latency, Pacing::RealTime))).await
}
