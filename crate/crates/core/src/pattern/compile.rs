use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::document::{PatternDocument, UnitKey};
use super::waveform::sample;
use super::PatternError;
use crate::protocol::{Action, Vibration, VibrationCommand, WaveSelect};
use crate::segment::{segment, FRAME_PERIOD_MS};
use crate::sim::MAX_CHAINS;

/// Sample rate used when rendering assignments for segmentation.
pub const COMPILE_RATE_HZ: f64 = 44_100.0;

/// A chain-tagged command with its send time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t_ms: u64,
    pub chain: u8,
    #[serde(flatten)]
    pub command: VibrationCommand,
}

impl TimedCommand {
    pub fn unit(&self) -> UnitKey {
        UnitKey {
            chain: self.chain,
            address: self.command.address,
        }
    }

    fn sort_key(&self) -> (u64, u8, u8, bool) {
        (self.t_ms, self.chain, self.command.address, !self.command.is_stop())
    }
}

/// `t_ms chain address start intensity freq_idx sine|square` or
/// `t_ms chain address stop`.
impl fmt::Display for TimedCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} ", self.t_ms, self.chain, self.command.address)?;
        match self.command.action {
            Action::Stop => f.write_str("stop"),
            Action::Start(v) => write!(
                f,
                "start {} {} {}",
                v.intensity,
                v.frequency_index,
                match v.waveform {
                    WaveSelect::Sine => "sine",
                    WaveSelect::Square => "square",
                }
            ),
        }
    }
}

pub fn format_commands(commands: &[TimedCommand]) -> String {
    let mut out = String::new();
    for c in commands {
        writeln!(out, "{c}").expect("writing to a String");
    }
    out
}

/// Parses the command line format; blank lines and `#` comments are skipped.
pub fn parse_commands(text: &str) -> Result<Vec<TimedCommand>, PatternError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |field: &str, message: String| PatternError::Parse {
            line: Some(line),
            field: field.into(),
            message,
        };
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let num = |idx: usize, field: &str| -> Result<u64, PatternError> {
            let tok = tokens
                .get(idx)
                .ok_or_else(|| err(field, "missing".into()))?;
            tok.parse::<u64>()
                .map_err(|_| err(field, format!("`{tok}` is not a non-negative integer")))
        };
        let small = |idx: usize, field: &str| -> Result<u8, PatternError> {
            let v = num(idx, field)?;
            u8::try_from(v).map_err(|_| err(field, format!("{v} is out of range")))
        };
        let t_ms = num(0, "t_ms")?;
        let chain = small(1, "chain")?;
        if usize::from(chain) >= MAX_CHAINS {
            return Err(err("chain", format!("{chain} exceeds the {MAX_CHAINS}-chain limit")));
        }
        let address = small(2, "address")?;
        let (action, arity) = match tokens.get(3).copied() {
            Some("stop") => (Action::Stop, 4),
            Some("start") => {
                let waveform = match tokens.get(6).copied() {
                    Some("sine") => WaveSelect::Sine,
                    Some("square") => WaveSelect::Square,
                    other => {
                        return Err(err(
                            "waveform",
                            format!("expected `sine` or `square`, found {other:?}"),
                        ))
                    }
                };
                let v = Vibration::new(small(4, "intensity")?, small(5, "frequency_index")?, waveform);
                (Action::Start(v), 7)
            }
            other => return Err(err("action", format!("expected `start` or `stop`, found {other:?}"))),
        };
        if tokens.len() != arity {
            return Err(err("line", format!("expected {arity} fields, found {}", tokens.len())));
        }
        let command = VibrationCommand { address, action };
        command
            .validate()
            .map_err(|e| err("command", e.to_string()))?;
        out.push(TimedCommand { t_ms, chain, command });
    }
    Ok(out)
}

/// Renders every assignment into change-only START commands on the 5 ms
/// frame grid plus a STOP at its end, sorted by `(t, chain, address)`.
pub fn compile(doc: &PatternDocument) -> Result<Vec<TimedCommand>, PatternError> {
    doc.validate()?;
    let mut out = Vec::new();
    for a in &doc.assignments {
        let waveform = &doc.waveform_library[&a.waveform_id];
        let span = a.t_end_ms - a.t_start_ms;
        let stream = segment(&sample(waveform, COMPILE_RATE_HZ, span as f64)?)?;
        let mut last: Option<Vibration> = None;
        for (j, frame) in stream.frames.iter().enumerate() {
            let offset = j as u64 * FRAME_PERIOD_MS;
            if offset >= span {
                break;
            }
            // silent frames inside an assignment drive at the lowest level
            let intensity = if frame.active { frame.intensity } else { 0 };
            let v = Vibration::new(intensity, frame.frequency_index, a.drive);
            if last != Some(v) {
                out.push(TimedCommand {
                    t_ms: a.t_start_ms + offset,
                    chain: a.chain,
                    command: VibrationCommand {
                        address: a.address,
                        action: Action::Start(v),
                    },
                });
                last = Some(v);
            }
        }
        out.push(TimedCommand {
            t_ms: a.t_end_ms,
            chain: a.chain,
            command: VibrationCommand::stop(a.address),
        });
    }
    out.sort_by_key(TimedCommand::sort_key);
    Ok(out)
}
