//! Control plane for daisy-chained vibrotactile actuators.
//!
//! * [`protocol`]: two-byte chained command codec with parity and hop rule.
//! * [`sim`]: deterministic chain simulator, voltage ladder and power budget.
//! * [`segment`]: audio-rate waveform to 200 Hz command-frame segmentation.
//! * [`pattern`]: waveform composition, pattern documents and the compiler.
//! * [`transport`]: 5 ms tick scheduler and packet transports.
//! * [`report`]: latency, bandwidth, battery and voltage tables.
//! * [`corpus`]: composed reference waveforms.
//! * [`service`]: pattern store and playback sessions behind the HTTP API.

pub mod corpus;
pub mod pattern;
pub mod protocol;
pub mod report;
pub mod segment;
pub mod service;
pub mod sim;
pub mod transport;
