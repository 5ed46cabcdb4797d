//! Discrete-event simulation of the control unit, its chains and their power rails.

mod engine;
pub mod ladder;
pub mod power;
mod topology;

use thiserror::Error;

use crate::protocol::CodecError;

pub use engine::{
    acceleration, ChainSim, DeliveryStats, Fault, Phase, SimEvent, SimEventKind, TracePoint,
    UnitState, AWAIT_TIMEOUT_US, DEFAULT_SEED, MAX_COMMANDS_PER_PACKET,
};
pub use ladder::{LadderModel, NodeVoltages, ACTUATOR_MIN_V, MCU_MIN_V};
pub use topology::{
    ChainSpec, LatencyModel, LoopMode, SimConfig, Topology, MAX_CHAINS, MAX_UNITS_PER_CHAIN,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown chain {0}")]
    UnknownChain(usize),
    #[error("unknown unit {unit} on chain {chain}")]
    UnknownUnit { chain: usize, unit: usize },
    #[error("packet carries {0} commands, at most 5 fit")]
    PacketOverflow(usize),
    #[error("time {requested} us precedes the simulation clock {clock} us")]
    TimeInPast { requested: u64, clock: u64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}
