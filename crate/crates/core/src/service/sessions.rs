use std::collections::BTreeMap;

use serde::Serialize;

use super::{Playback, ServiceError, StateFrame};
use crate::pattern::PatternDocument;
use crate::sim::LatencyModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Playing,
    Stopping,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionInfo {
    pub id: String,
    pub pattern_id: String,
    pub state: SessionState,
    pub cursor_ms: Option<u64>,
}

/// One playback session bound to a stored pattern.
///
/// Frames are pulled with [`Session::next_frame`]; the HTTP layer paces the
/// pulls at 30 Hz.
#[derive(Debug)]
pub struct Session {
    id: String,
    pattern_id: String,
    latency: LatencyModel,
    playback: Option<Playback>,
    state: SessionState,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pattern_id(&self) -> &str {
        &self.pattern_id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            id: self.id.clone(),
            pattern_id: self.pattern_id.clone(),
            state: self.state,
            cursor_ms: self.playback.as_ref().map(Playback::cursor_ms),
        }
    }

    /// Starts playback of `doc` at `from_ms`. A finished or idle session may
    /// be played again.
    pub fn play(&mut self, doc: &PatternDocument, from_ms: u64) -> Result<(), ServiceError> {
        self.ensure_idle()?;
        self.begin(Playback::start(doc, from_ms, self.latency)?)
    }

    /// Installs a playback prepared elsewhere, e.g. compiled without holding
    /// the session lock.
    pub fn begin(&mut self, playback: Playback) -> Result<(), ServiceError> {
        self.ensure_idle()?;
        self.playback = Some(playback);
        self.state = SessionState::Playing;
        Ok(())
    }

    pub fn ensure_idle(&self) -> Result<(), ServiceError> {
        if matches!(self.state, SessionState::Playing | SessionState::Stopping) {
            return Err(ServiceError::Conflict(format!("session {} is already playing", self.id)));
        }
        Ok(())
    }

    pub fn latency(&self) -> LatencyModel {
        self.latency
    }

    pub fn stop(&mut self) {
        if let Some(p) = self.playback.as_mut() {
            if self.state == SessionState::Playing {
                p.stop();
                self.state = SessionState::Stopping;
            }
        }
    }

    pub fn next_frame(&mut self) -> Option<StateFrame> {
        let frame = self.playback.as_mut()?.next_frame();
        if frame.is_none() && matches!(self.state, SessionState::Playing | SessionState::Stopping) {
            self.state = SessionState::Complete;
        }
        frame
    }
}

#[derive(Debug, Default)]
pub struct Sessions {
    sessions: BTreeMap<String, Session>,
    next_id: u64,
    latency: LatencyModel,
}

impl Sessions {
    pub fn new(latency: LatencyModel) -> Self {
        Self {
            latency,
            ..Self::default()
        }
    }

    pub fn create(&mut self, pattern_id: &str) -> &mut Session {
        self.next_id += 1;
        let id = format!("s{}", self.next_id);
        self.sessions.entry(id.clone()).or_insert(Session {
            id,
            pattern_id: pattern_id.to_owned(),
            latency: self.latency,
            playback: None,
            state: SessionState::Idle,
        })
    }

    pub fn get(&self, id: &str) -> Result<&Session, ServiceError> {
        self.sessions.get(id).ok_or_else(|| ServiceError::not_found("session", id))
    }

    pub fn get_mut(&mut self, id: &str) -> Result<&mut Session, ServiceError> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| ServiceError::not_found("session", id))
    }

    pub fn remove(&mut self, id: &str) -> Result<Session, ServiceError> {
        self.sessions
            .remove(id)
            .ok_or_else(|| ServiceError::not_found("session", id))
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        self.sessions.values().map(Session::info).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{create_chain_grid, UnitKey, Waveform};

    fn doc() -> PatternDocument {
        let mut doc = PatternDocument::new("d");
        create_chain_grid(&mut doc, 3, (0.0, 0.0), 1.0).unwrap();
        doc.waveform_library.insert("w".into(), Waveform::sine(200.0));
        doc.assign(UnitKey { chain: 0, address: 1 }, "w", 0, 200);
        doc
    }

    #[test]
    fn lifecycle() {
        let mut sessions = Sessions::new(LatencyModel::default());
        let id = sessions.create("p1").id().to_owned();
        let s = sessions.get_mut(&id).unwrap();
        assert_eq!(s.next_frame(), None);
        assert!(s.play(&doc(), 300).is_err());
        s.play(&doc(), 0).unwrap();
        assert_eq!(s.state(), SessionState::Playing);
        assert!(matches!(s.play(&doc(), 0), Err(ServiceError::Conflict(_))));
        s.next_frame().unwrap();
        s.stop();
        assert_eq!(s.state(), SessionState::Stopping);
        while s.next_frame().is_some() {}
        assert_eq!(s.state(), SessionState::Complete);
        s.play(&doc(), 100).unwrap();
        assert_eq!(sessions.list().len(), 1);
        sessions.remove(&id).unwrap();
        assert!(sessions.get(&id).is_err());
    }
}
