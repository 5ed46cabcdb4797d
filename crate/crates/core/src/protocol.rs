//! Two-byte chained command protocol.
//!
//! Every frame is an 8-bit data byte plus an even parity bit. The header byte
//! carries a 7-bit hop-count address and the start/stop flag:
//!
//! ```text
//! header:  a6 a5 a4 a3 a2 a1 a0 S      S = 1 START, 0 STOP
//! payload: i3 i2 i1 i0 f2 f1 f0 W      W = 1 SQUARE, 0 SINE
//! ```
//!
//! A STOP command is the header alone. A START command is followed by the
//! payload byte. Units along a chain consume a header whose address is zero
//! and otherwise forward it with the address decremented by one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ADDRESS: u8 = 127;
pub const MAX_INTENSITY: u8 = 15;
pub const MAX_FREQUENCY_INDEX: u8 = 7;

/// Carrier frequencies selectable by the 3-bit frequency field.
pub const FREQUENCIES_HZ: [f64; 8] = [123.0, 145.0, 170.0, 200.0, 235.0, 275.0, 322.0, 384.0];

/// PWM duty cycle of an intensity level: `(level + 1) / 16`.
///
/// Level 3 is 25 %, level 7 is 50 % and level 15 is full drive. Zero output is
/// reached only through STOP.
pub fn duty_fraction(level: u8) -> f64 {
    (f64::from(level.min(MAX_INTENSITY)) + 1.0) / 16.0
}

pub fn frequency_hz(index: u8) -> f64 {
    FREQUENCIES_HZ[usize::from(index.min(MAX_FREQUENCY_INDEX))]
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{field} = {value} is out of range (max {max})")]
    Range {
        field: &'static str,
        value: u32,
        max: u32,
    },
    #[error("parity mismatch on frame {index}")]
    Parity { index: usize },
    #[error("START header without its payload frame")]
    Truncated,
    #[error("no frames to decode")]
    Empty,
    #[error("{extra} unexpected trailing frame(s)")]
    Trailing { extra: usize },
}

/// One 9-bit UART frame: data byte and its even parity bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameByte {
    pub data: u8,
    pub parity: bool,
}

impl FrameByte {
    /// Builds a frame with freshly computed parity.
    pub fn new(data: u8) -> Self {
        Self {
            data,
            parity: even_parity(data),
        }
    }

    pub fn is_valid(self) -> bool {
        self.parity == even_parity(self.data)
    }

    /// Flips bit `bit` of the 9-bit frame; bit 8 is the parity bit.
    pub fn with_bit_flipped(self, bit: u8) -> Self {
        match bit {
            0..=7 => Self {
                data: self.data ^ (1 << bit),
                parity: self.parity,
            },
            _ => Self {
                data: self.data,
                parity: !self.parity,
            },
        }
    }
}

/// Parity bit that makes the total number of ones (data plus parity) even.
pub fn even_parity(data: u8) -> bool {
    data.count_ones() % 2 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveSelect {
    #[default]
    Sine,
    Square,
}

/// Drive parameters carried by a START payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vibration {
    pub intensity: u8,
    pub frequency_index: u8,
    #[serde(default)]
    pub waveform: WaveSelect,
}

impl Vibration {
    pub fn new(intensity: u8, frequency_index: u8, waveform: WaveSelect) -> Self {
        Self {
            intensity,
            frequency_index,
            waveform,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        frequency_hz(self.frequency_index)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        check_range("intensity", self.intensity, MAX_INTENSITY)?;
        check_range("frequency_index", self.frequency_index, MAX_FREQUENCY_INDEX)
    }

    fn encode(&self) -> u8 {
        (self.intensity << 4)
            | (self.frequency_index << 1)
            | u8::from(self.waveform == WaveSelect::Square)
    }

    fn decode(byte: u8) -> Self {
        Self {
            intensity: byte >> 4,
            frequency_index: (byte >> 1) & 0x07,
            waveform: if byte & 1 == 1 {
                WaveSelect::Square
            } else {
                WaveSelect::Sine
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "action")]
pub enum Action {
    Start(Vibration),
    Stop,
}

/// One addressed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VibrationCommand {
    pub address: u8,
    #[serde(flatten)]
    pub action: Action,
}

impl VibrationCommand {
    pub fn start(address: u8, intensity: u8, frequency_index: u8, waveform: WaveSelect) -> Self {
        Self {
            address,
            action: Action::Start(Vibration::new(intensity, frequency_index, waveform)),
        }
    }

    pub fn stop(address: u8) -> Self {
        Self {
            address,
            action: Action::Stop,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self.action, Action::Stop)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        check_range("address", self.address, MAX_ADDRESS)?;
        match &self.action {
            Action::Start(v) => v.validate(),
            Action::Stop => Ok(()),
        }
    }
}

fn check_range(field: &'static str, value: u8, max: u8) -> Result<(), CodecError> {
    if value > max {
        return Err(CodecError::Range {
            field,
            value: value.into(),
            max: max.into(),
        });
    }
    Ok(())
}

/// Encodes a command into one (STOP) or two (START) frames.
pub fn encode(cmd: &VibrationCommand) -> Result<Vec<FrameByte>, CodecError> {
    cmd.validate()?;
    let start = matches!(cmd.action, Action::Start(_));
    let mut frames = vec![FrameByte::new((cmd.address << 1) | u8::from(start))];
    if let Action::Start(v) = &cmd.action {
        frames.push(FrameByte::new(v.encode()));
    }
    Ok(frames)
}

/// Inverse of [`encode`].
pub fn decode(frames: &[FrameByte]) -> Result<VibrationCommand, CodecError> {
    let (header, rest) = frames.split_first().ok_or(CodecError::Empty)?;
    if let Some(index) = frames.iter().position(|f| !f.is_valid()) {
        return Err(CodecError::Parity { index });
    }
    let address = header.data >> 1;
    if header.data & 1 == 0 {
        if !rest.is_empty() {
            return Err(CodecError::Trailing { extra: rest.len() });
        }
        return Ok(VibrationCommand::stop(address));
    }
    match rest {
        [] => Err(CodecError::Truncated),
        [payload] => Ok(VibrationCommand {
            address,
            action: Action::Start(Vibration::decode(payload.data)),
        }),
        [_, extra @ ..] => Err(CodecError::Trailing { extra: extra.len() }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopDecision {
    Consume,
    Forward(FrameByte),
}

/// Hop rule applied by every unit to an incoming header frame.
pub fn apply_hop(header: FrameByte) -> Result<HopDecision, CodecError> {
    if !header.is_valid() {
        return Err(CodecError::Parity { index: 0 });
    }
    let address = header.data >> 1;
    if address == 0 {
        Ok(HopDecision::Consume)
    } else {
        let forwarded = ((address - 1) << 1) | (header.data & 1);
        Ok(HopDecision::Forward(FrameByte::new(forwarded)))
    }
}

/// True when the header announces a payload frame (START).
pub fn expects_second_byte(header: FrameByte) -> bool {
    header.data & 1 == 1
}

pub fn header_address(header: FrameByte) -> u8 {
    header.data >> 1
}
