//! Waveform composition, pattern documents and compilation to timed commands.

mod compile;
mod document;
mod import;
mod waveform;

use thiserror::Error;

use crate::segment::SegmentError;

pub use compile::{compile, format_commands, parse_commands, TimedCommand, COMPILE_RATE_HZ};
pub use document::{
    active_units_at, create_chain_grid, Assignment, ChainLayout, PatternDocument, UnitKey, UnitRef,
    SCHEMA_VERSION,
};
pub use import::{export_csv, export_keyframes, import_csv, import_keyframes, DEFAULT_CARRIER_HZ};
pub use waveform::{sample, Envelope, Frequency, Oscillator, Shape, Waveform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("sample rate {rate_hz} Hz is below twice the highest oscillator frequency ({max_hz} Hz)")]
    Aliasing { rate_hz: f64, max_hz: f64 },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("parse error{}, {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("overlapping assignments on chain {chain} unit {address}: {first:?} and {second:?}")]
    Overlap {
        chain: u8,
        address: u8,
        first: (u64, u64),
        second: (u64, u64),
    },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

impl PatternError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
