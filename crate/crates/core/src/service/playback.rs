use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::pattern::{active_units_at, compile, PatternDocument, TimedCommand, UnitKey};
use crate::protocol::{Action, VibrationCommand};
use crate::sim::{ChainSim, LatencyModel, Phase};
use crate::transport::{schedule, Packet, TICK_MS};

pub const FRAME_RATE_HZ: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFrame {
    pub chain: u8,
    pub addr: u8,
    pub active: bool,
    pub intensity: u8,
    pub freq_idx: u8,
}

/// Snapshot of every unit at pattern time `t_ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t_ms: u64,
    pub units: Vec<UnitFrame>,
}

/// Pattern time of the `k`-th frame after `from_ms`.
pub fn frame_time_ms(from_ms: u64, k: u64) -> u64 {
    from_ms + k * 1000 / FRAME_RATE_HZ
}

/// Reads every unit's state at `t_ms` from the simulator trace.
pub fn sample_frame(sim: &ChainSim, t_ms: u64) -> StateFrame {
    let mut units = Vec::with_capacity(sim.topology().unit_count());
    for (c, spec) in sim.topology().chains.iter().enumerate() {
        for u in 0..spec.units {
            let p = sim.state_at(c, u, t_ms * 1000).expect("unit exists in its own topology");
            let active = p.phase == Phase::Active;
            let v = p.vibration.filter(|_| active);
            units.push(UnitFrame {
                chain: c as u8,
                addr: u as u8,
                active,
                intensity: v.map_or(0, |v| v.intensity),
                freq_idx: v.map_or(0, |v| v.frequency_index),
            });
        }
    }
    StateFrame { t_ms, units }
}

/// Commands for playback starting at `from_ms`: later commands unchanged,
/// plus each unit's last earlier START re-sent at `from_ms` when it is still
/// in effect there.
pub fn commands_from(commands: &[TimedCommand], from_ms: u64) -> Vec<TimedCommand> {
    let mut carried: BTreeMap<UnitKey, TimedCommand> = BTreeMap::new();
    for c in commands.iter().filter(|c| c.t_ms < from_ms) {
        carried.insert(c.unit(), *c);
    }
    let mut out: Vec<TimedCommand> = carried
        .into_values()
        .filter(|c| !c.command.is_stop())
        .map(|c| TimedCommand { t_ms: from_ms, ..c })
        .collect();
    let later: Vec<TimedCommand> = commands.iter().filter(|c| c.t_ms >= from_ms).copied().collect();
    // a STOP landing exactly on from_ms supersedes the carried START
    out.retain(|c| !later.iter().any(|l| l.t_ms == from_ms && l.unit() == c.unit()));
    out.extend(later);
    out.sort_by_key(|c| c.t_ms);
    out
}

/// Cursor-driven simulated playback.
///
/// Packets are handed to the simulator only when the cursor reaches their
/// send time, so [`Playback::stop`] cancels everything not yet sent.
#[derive(Debug, Clone)]
pub struct Playback {
    sim: ChainSim,
    queue: VecDeque<Packet>,
    from_ms: u64,
    end_ms: u64,
    next_frame: u64,
    armed: BTreeSet<UnitKey>,
    stopped: bool,
}

impl Playback {
    pub fn start(doc: &PatternDocument, from_ms: u64, latency: LatencyModel) -> Result<Self, ServiceError> {
        if doc.chains.is_empty() {
            return Err(ServiceError::Validation {
                field: "chains".into(),
                message: "pattern has no chains to play on".into(),
            });
        }
        let duration = doc.duration_ms();
        if from_ms > duration {
            return Err(ServiceError::Validation {
                field: "from_ms".into(),
                message: format!("{from_ms} is past the pattern end ({duration} ms)"),
            });
        }
        let commands = commands_from(&compile(doc)?, from_ms);
        let plan = schedule(&commands);
        let sim = ChainSim::new(doc.topology(), latency).map_err(ServiceError::internal)?;
        let end_ms = plan
            .packets
            .last()
            .map_or(from_ms, |p| settle_ms(p.tick * TICK_MS, &sim));
        Ok(Self {
            sim,
            queue: plan.packets.into(),
            from_ms,
            end_ms,
            next_frame: 0,
            armed: BTreeSet::new(),
            stopped: false,
        })
    }

    pub fn sim(&self) -> &ChainSim {
        &self.sim
    }

    /// Time after which no further state change can happen.
    pub fn end_ms(&self) -> u64 {
        self.end_ms
    }

    pub fn cursor_ms(&self) -> u64 {
        frame_time_ms(self.from_ms, self.next_frame.saturating_sub(1))
    }

    /// True once a frame at or past [`Playback::end_ms`] has been emitted.
    pub fn is_complete(&self) -> bool {
        self.next_frame > 0 && self.cursor_ms() >= self.end_ms
    }

    fn advance_to(&mut self, t_ms: u64) {
        while self.queue.front().is_some_and(|p| p.tick * TICK_MS <= t_ms) {
            let p = self.queue.pop_front().expect("front exists");
            for c in &p.commands {
                let key = UnitKey {
                    chain: c.chain,
                    address: c.command.address,
                };
                match c.command.action {
                    Action::Start(_) => self.armed.insert(key),
                    Action::Stop => self.armed.remove(&key),
                };
            }
            self.sim
                .inject_mixed(&p.mixed(), p.send_time_us())
                .expect("compiled packets fit the document topology and arrive in time order");
        }
        self.sim
            .run_until(t_ms * 1000)
            .expect("frame times never go backwards");
    }

    /// The next 30 Hz frame, or `None` once playback has settled.
    pub fn next_frame(&mut self) -> Option<StateFrame> {
        if self.is_complete() {
            return None;
        }
        let t = frame_time_ms(self.from_ms, self.next_frame);
        self.next_frame += 1;
        self.advance_to(t);
        Some(sample_frame(&self.sim, t))
    }

    /// Drops unsent packets and sends STOP to every unit that may be
    /// vibrating, starting at the first tick at or after the cursor.
    pub fn stop(&mut self) {
        if self.stopped {
            return;
        }
        self.stopped = true;
        self.queue.clear();
        let now = self.cursor_ms();
        let first_tick = now.div_ceil(TICK_MS);
        let stops: Vec<TimedCommand> = self
            .armed
            .iter()
            .map(|k| TimedCommand {
                t_ms: first_tick * TICK_MS,
                chain: k.chain,
                command: VibrationCommand::stop(k.address),
            })
            .collect();
        let plan = schedule(&stops);
        self.end_ms = plan
            .packets
            .last()
            .map_or(now, |p| settle_ms(p.tick * TICK_MS, &self.sim));
        self.queue = plan.packets.into();
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }
}

/// Latest time a packet sent at `send_ms` can still change unit state.
fn settle_ms(send_ms: u64, sim: &ChainSim) -> u64 {
    let longest = sim.topology().longest_chain();
    // five commands can queue on one chain line ahead of the last one
    let delay_us = sim.latency().activation_delay_us(longest.max(1) - 1)
        + 5 * sim.latency().hop_duration_us();
    send_ms + delay_us.div_ceil(1000)
}

/// Offline reference: the whole compiled pattern dispatched at once, then
/// sampled at the playback frame times.
pub fn offline_frames(doc: &PatternDocument, from_ms: u64, latency: LatencyModel) -> Result<Vec<StateFrame>, ServiceError> {
    let reference = Playback::start(doc, from_ms, latency)?;
    let mut sim = reference.sim.clone();
    for p in &reference.queue {
        sim.inject_mixed(&p.mixed(), p.send_time_us())
            .map_err(ServiceError::internal)?;
    }
    sim.run_to_idle();
    let mut out = Vec::new();
    for k in 0.. {
        let t = frame_time_ms(from_ms, k);
        out.push(sample_frame(&sim, t));
        if t >= reference.end_ms {
            break;
        }
    }
    Ok(out)
}

/// Highlight set for the timeline slider.
pub fn scrub(doc: &PatternDocument, t_ms: f64) -> Result<BTreeSet<UnitKey>, ServiceError> {
    let duration = doc.duration_ms() as f64;
    if !(t_ms.is_finite() && (0.0..=duration).contains(&t_ms)) {
        return Err(ServiceError::Validation {
            field: "t_ms".into(),
            message: format!("{t_ms} is outside [0, {duration}]"),
        });
    }
    Ok(active_units_at(doc, t_ms))
}
