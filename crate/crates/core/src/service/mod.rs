//! Pattern store and playback sessions behind the HTTP API.

mod playback;
mod sessions;
mod store;

use thiserror::Error;

use crate::pattern::PatternError;

pub use playback::{commands_from, frame_time_ms, offline_frames, sample_frame, scrub, Playback, StateFrame, UnitFrame, FRAME_RATE_HZ};
pub use sessions::{Session, SessionInfo, SessionState, Sessions};
pub use store::{PatternStore, PatternSummary, StoredPattern, WaveformLibrary};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn not_found(kind: &'static str, id: &str) -> Self {
        Self::NotFound {
            kind,
            id: id.to_owned(),
        }
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        Self::Internal(err.to_string())
    }

    /// HTTP status code for this error.
    pub fn status(&self) -> u16 {
        match self {
            Self::NotFound { .. } => 404,
            Self::Validation { .. } | Self::Pattern(_) => 422,
            Self::Conflict(_) => 409,
            Self::Internal(_) => 500,
        }
    }
}
