//! 5 ms tick scheduling and packet transports.

mod endpoint;
mod record;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{CodecError, VibrationCommand};
use crate::sim::SimError;

pub use endpoint::{dispatch, replay, DeliveryReport, EndpointKind, RecordFile, SimLoopback, StreamEndpoint, Transport};
pub use record::{
    encode_packet, encode_record, frame_stream_packet, parse_packet, parse_record, read_stream_packet,
};
pub use schedule::{schedule, Schedule, Spill};

pub const TICK_MS: u64 = 5;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("endpoint is closed")]
    Closed,
    #[error("packet carries {0} commands, at most 5 fit")]
    Overflow(usize),
    #[error("corrupt record at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainCommand {
    pub chain: u8,
    #[serde(flatten)]
    pub command: VibrationCommand,
}

/// Commands sent together in one 5 ms tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub tick: u64,
    pub commands: Vec<ChainCommand>,
}

impl Packet {
    pub fn send_time_us(&self) -> u64 {
        self.tick * TICK_MS * 1000
    }

    pub fn mixed(&self) -> Vec<(usize, VibrationCommand)> {
        self.commands
            .iter()
            .map(|c| (usize::from(c.chain), c.command))
            .collect()
    }
}
