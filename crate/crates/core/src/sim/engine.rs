use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{self, Action, FrameByte, HopDecision, Vibration, VibrationCommand, WaveSelect};

use super::topology::{LatencyModel, LoopMode, Topology};
use super::SimError;

/// Commands carried by one BLE write.
pub const MAX_COMMANDS_PER_PACKET: usize = 5;
/// A unit that saw a START header gives up on its payload after this long.
pub const AWAIT_TIMEOUT_US: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 0x5EED_F0E6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    AwaitSecondByte,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitState {
    pub phase: Phase,
    pub current: Option<Vibration>,
    await_token: u64,
}

impl Default for UnitState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            current: None,
            await_token: 0,
        }
    }
}

impl UnitState {
    pub fn is_active(&self) -> bool {
        self.phase == Phase::Active
    }

    pub fn mcu_current_a(&self) -> f64 {
        super::power::UNIT_IDLE_CURRENT_A
    }

    pub fn actuator_current_a(&self) -> f64 {
        if self.is_active() {
            super::power::ACTUATOR_CURRENT_A
        } else {
            0.0
        }
    }
}

/// Injected transmission fault. Each fault fires once, on the first matching
/// command reaching `hop` (optionally only the `command`-th command injected
/// on that chain, counting from zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fault {
    BitFlip {
        chain: usize,
        hop: usize,
        frame: u8,
        bit: u8,
        #[serde(default)]
        command: Option<u64>,
    },
    Drop {
        chain: usize,
        hop: usize,
        #[serde(default)]
        command: Option<u64>,
    },
}

impl Fault {
    fn location(&self) -> (usize, usize, Option<u64>) {
        match *self {
            Fault::BitFlip {
                chain, hop, command, ..
            }
            | Fault::Drop {
                chain, hop, command, ..
            } => (chain, hop, command),
        }
    }

    /// Parses `bitflip:CHAIN:HOP:FRAME:BIT[:CMD]` or `drop:CHAIN:HOP[:CMD]`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |i: usize| -> Result<u64, String> {
            parts
                .get(i)
                .ok_or_else(|| format!("fault `{text}`: missing field {i}"))?
                .parse::<u64>()
                .map_err(|e| format!("fault `{text}`: field {i}: {e}"))
        };
        let opt = |i: usize| -> Result<Option<u64>, String> {
            if parts.len() > i {
                num(i).map(Some)
            } else {
                Ok(None)
            }
        };
        match parts.first().copied() {
            Some("bitflip") if (5..=6).contains(&parts.len()) => {
                let bit = num(4)?;
                let frame = num(3)?;
                if bit > 8 || frame > 1 {
                    return Err(format!("fault `{text}`: frame must be 0..1 and bit 0..8"));
                }
                Ok(Fault::BitFlip {
                    chain: num(1)? as usize,
                    hop: num(2)? as usize,
                    frame: frame as u8,
                    bit: bit as u8,
                    command: opt(5)?,
                })
            }
            Some("drop") if (3..=4).contains(&parts.len()) => Ok(Fault::Drop {
                chain: num(1)? as usize,
                hop: num(2)? as usize,
                command: opt(3)?,
            }),
            _ => Err(format!(
                "fault `{text}`: expected bitflip:CHAIN:HOP:FRAME:BIT[:CMD] or drop:CHAIN:HOP[:CMD]"
            )),
        }
    }

    /// `count` single-bit flips at seeded random locations of `topology`.
    pub fn random(topology: &Topology, seed: u64, count: usize) -> Vec<Fault> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains: Vec<usize> = (0..topology.chains.len())
            .filter(|&c| topology.chains[c].units > 0)
            .collect();
        if chains.is_empty() {
            return Vec::new();
        }
        (0..count)
            .map(|_| {
                let chain = chains[rng.random_range(0..chains.len())];
                Fault::BitFlip {
                    chain,
                    hop: rng.random_range(0..topology.chains[chain].units),
                    frame: rng.random_range(0..2),
                    bit: rng.random_range(0..9),
                    command: None,
                }
            })
            .collect()
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Fault::BitFlip {
                chain,
                hop,
                frame,
                bit,
                command,
            } => {
                write!(f, "bitflip:{chain}:{hop}:{frame}:{bit}")?;
                if let Some(c) = command {
                    write!(f, ":{c}")?;
                }
                Ok(())
            }
            Fault::Drop { chain, hop, command } => {
                write!(f, "drop:{chain}:{hop}")?;
                if let Some(c) = command {
                    write!(f, ":{c}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEventKind {
    Start(Vibration),
    Stop,
    AwaitPayload,
    PayloadTimeout,
    ParityDrop { frame: u8 },
    FaultDrop,
    ExitChain { remaining: u8, returned: bool },
}

/// One line of the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub t_us: u64,
    pub chain: usize,
    pub unit: Option<usize>,
    pub kind: SimEventKind,
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.t_us, self.chain)?;
        match self.unit {
            Some(u) => write!(f, "{u} ")?,
            None => write!(f, "- ")?,
        }
        match self.kind {
            SimEventKind::Start(v) => write!(
                f,
                "START intensity={} freq={} wave={}",
                v.intensity,
                v.frequency_index,
                match v.waveform {
                    WaveSelect::Sine => "sine",
                    WaveSelect::Square => "square",
                }
            ),
            SimEventKind::Stop => write!(f, "STOP -"),
            SimEventKind::AwaitPayload => write!(f, "AWAIT -"),
            SimEventKind::PayloadTimeout => write!(f, "TIMEOUT -"),
            SimEventKind::ParityDrop { frame } => write!(f, "PARITY_DROP frame={frame}"),
            SimEventKind::FaultDrop => write!(f, "FAULT_DROP -"),
            SimEventKind::ExitChain {
                remaining,
                returned,
            } => write!(
                f,
                "{} remaining={remaining}",
                if returned { "RETURNED" } else { "EXIT_CHAIN" }
            ),
        }
    }
}

/// Per-unit state sample, appended whenever the unit consumes a command or times out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracePoint {
    pub t_us: u64,
    pub phase: Phase,
    pub vibration: Option<Vibration>,
}

/// Fate counters; `injected == consumed + dropped + exited + in_flight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeliveryStats {
    pub injected: u64,
    pub consumed: u64,
    pub dropped: u64,
    pub exited: u64,
}

impl DeliveryStats {
    pub fn in_flight(&self) -> u64 {
        self.injected - self.consumed - self.dropped - self.exited
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pending {
    Command {
        unit: usize,
        cmd: u64,
        frames: Vec<FrameByte>,
        // payload already lost upstream; the command has been counted as dropped
        degraded: bool,
    },
    Timeout {
        unit: usize,
        token: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Scheduled {
    t_us: u64,
    chain: usize,
    seq: u64,
    pending: Pending,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.t_us, self.chain, self.seq).cmp(&(other.t_us, other.chain, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Deterministic discrete-event model of one control unit and its chains.
#[derive(Debug, Clone)]
pub struct ChainSim {
    topology: Topology,
    latency: LatencyModel,
    seed: u64,
    clock_us: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    units: Vec<Vec<UnitState>>,
    traces: Vec<Vec<Vec<TracePoint>>>,
    log: Vec<SimEvent>,
    faults: Vec<Fault>,
    line_free_us: Vec<u64>,
    chain_commands: Vec<u64>,
    stats: DeliveryStats,
}

impl ChainSim {
    pub fn new(topology: Topology, latency: LatencyModel) -> Result<Self, SimError> {
        topology.validate()?;
        latency.validate()?;
        let units = topology
            .chains
            .iter()
            .map(|c| vec![UnitState::default(); c.units])
            .collect();
        let traces = topology
            .chains
            .iter()
            .map(|c| vec![Vec::new(); c.units])
            .collect();
        let n = topology.chains.len();
        Ok(Self {
            topology,
            latency,
            seed: DEFAULT_SEED,
            clock_us: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            units,
            traces,
            log: Vec::new(),
            faults: Vec::new(),
            line_free_us: vec![0; n],
            chain_commands: vec![0; n],
            stats: DeliveryStats::default(),
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn clock_us(&self) -> u64 {
        self.clock_us
    }

    pub fn stats(&self) -> DeliveryStats {
        self.stats
    }

    pub fn units(&self) -> &[Vec<UnitState>] {
        &self.units
    }

    pub fn unit(&self, chain: usize, unit: usize) -> Result<&UnitState, SimError> {
        self.units
            .get(chain)
            .ok_or(SimError::UnknownChain(chain))?
            .get(unit)
            .ok_or(SimError::UnknownUnit { chain, unit })
    }

    pub fn trace(&self, chain: usize, unit: usize) -> Result<&[TracePoint], SimError> {
        self.unit(chain, unit)?;
        Ok(&self.traces[chain][unit])
    }

    pub fn event_log(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), SimError> {
        let (chain, hop, _) = fault.location();
        let spec = self
            .topology
            .chains
            .get(chain)
            .ok_or(SimError::UnknownChain(chain))?;
        if hop >= spec.units {
            return Err(SimError::UnknownUnit { chain, unit: hop });
        }
        self.faults.push(fault);
        Ok(())
    }

    /// Queues one BLE packet's worth of commands for `chain`.
    pub fn inject_packet(
        &mut self,
        chain: usize,
        commands: &[VibrationCommand],
        send_time_us: u64,
    ) -> Result<(), SimError> {
        if commands.len() > MAX_COMMANDS_PER_PACKET {
            return Err(SimError::PacketOverflow(commands.len()));
        }
        self.inject_chain_commands(chain, commands, send_time_us)
    }

    /// Queues a packet that may address several chains; the total command
    /// count is bounded, per-chain order is kept.
    pub fn inject_mixed(
        &mut self,
        commands: &[(usize, VibrationCommand)],
        send_time_us: u64,
    ) -> Result<(), SimError> {
        if commands.len() > MAX_COMMANDS_PER_PACKET {
            return Err(SimError::PacketOverflow(commands.len()));
        }
        for &(chain, _) in commands {
            if chain >= self.units.len() {
                return Err(SimError::UnknownChain(chain));
            }
        }
        for chain in 0..self.units.len() {
            let ours: Vec<VibrationCommand> = commands
                .iter()
                .filter(|(c, _)| *c == chain)
                .map(|(_, cmd)| *cmd)
                .collect();
            if !ours.is_empty() {
                self.inject_chain_commands(chain, &ours, send_time_us)?;
            }
        }
        Ok(())
    }

    fn inject_chain_commands(
        &mut self,
        chain: usize,
        commands: &[VibrationCommand],
        send_time_us: u64,
    ) -> Result<(), SimError> {
        if chain >= self.units.len() {
            return Err(SimError::UnknownChain(chain));
        }
        if send_time_us < self.clock_us {
            return Err(SimError::TimeInPast {
                requested: send_time_us,
                clock: self.clock_us,
            });
        }
        let encoded = commands
            .iter()
            .map(protocol::encode)
            .collect::<Result<Vec<_>, _>>()?;
        let hop = self.latency.hop_duration_us();
        let arrival = send_time_us + self.latency.ble_one_way_us();
        for frames in encoded {
            let head = arrival.max(self.line_free_us[chain]);
            self.line_free_us[chain] = head + hop;
            let cmd = self.chain_commands[chain];
            self.chain_commands[chain] += 1;
            self.stats.injected += 1;
            if self.topology.chains[chain].units == 0 {
                self.exit_chain(head, chain, frames[0]);
                continue;
            }
            self.push(
                head + hop,
                chain,
                Pending::Command {
                    unit: 0,
                    cmd,
                    frames,
                    degraded: false,
                },
            );
        }
        Ok(())
    }

    fn push(&mut self, t_us: u64, chain: usize, pending: Pending) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            t_us,
            chain,
            seq,
            pending,
        }));
    }

    /// Applies every queued event with timestamp `<= t_us` and advances the clock.
    pub fn run_until(&mut self, t_us: u64) -> Result<Vec<SimEvent>, SimError> {
        if t_us < self.clock_us {
            return Err(SimError::TimeInPast {
                requested: t_us,
                clock: self.clock_us,
            });
        }
        let start = self.log.len();
        while let Some(Reverse(next)) = self.queue.peek() {
            if next.t_us > t_us {
                break;
            }
            let Reverse(event) = self.queue.pop().expect("peeked");
            self.clock_us = event.t_us;
            self.process(event);
        }
        self.clock_us = t_us;
        Ok(self.log[start..].to_vec())
    }

    /// Drains the queue; the clock stops at the last event.
    pub fn run_to_idle(&mut self) -> Vec<SimEvent> {
        let mut out = Vec::new();
        while let Some(Reverse(next)) = self.queue.peek() {
            let t = next.t_us;
            out.extend(self.run_until(t).expect("queue times never precede the clock"));
        }
        out
    }

    fn take_fault(&mut self, chain: usize, hop: usize, cmd: u64, drop: bool) -> Option<Fault> {
        let pos = self.faults.iter().position(|f| {
            let (c, h, which) = f.location();
            c == chain
                && h == hop
                && which.is_none_or(|w| w == cmd)
                && matches!(f, Fault::Drop { .. }) == drop
        })?;
        Some(self.faults.remove(pos))
    }

    fn apply_bit_flips(&mut self, chain: usize, hop: usize, cmd: u64, frames: &mut [FrameByte]) {
        while let Some(Fault::BitFlip { frame, bit, .. }) = self.take_fault(chain, hop, cmd, false) {
            if let Some(f) = frames.get_mut(usize::from(frame)) {
                *f = f.with_bit_flipped(bit);
            }
        }
    }

    fn log_event(&mut self, t_us: u64, chain: usize, unit: Option<usize>, kind: SimEventKind) {
        self.log.push(SimEvent {
            t_us,
            chain,
            unit,
            kind,
        });
    }

    fn record(&mut self, t_us: u64, chain: usize, unit: usize) {
        let state = self.units[chain][unit];
        self.traces[chain][unit].push(TracePoint {
            t_us,
            phase: state.phase,
            vibration: state.current,
        });
    }

    fn exit_chain(&mut self, t_us: u64, chain: usize, header: FrameByte) {
        let returned = self.topology.chains[chain].loop_mode == LoopMode::Closed;
        self.log_event(
            t_us,
            chain,
            None,
            SimEventKind::ExitChain {
                remaining: protocol::header_address(header),
                returned,
            },
        );
    }

    fn process(&mut self, event: Scheduled) {
        let Scheduled {
            t_us,
            chain,
            pending,
            ..
        } = event;
        match pending {
            Pending::Timeout { unit, token } => {
                let state = &mut self.units[chain][unit];
                if state.phase == Phase::AwaitSecondByte && state.await_token == token {
                    state.phase = Phase::Idle;
                    state.current = None;
                    self.log_event(t_us, chain, Some(unit), SimEventKind::PayloadTimeout);
                    self.record(t_us, chain, unit);
                }
            }
            Pending::Command {
                unit,
                cmd,
                mut frames,
                mut degraded,
            } => {
                if self.take_fault(chain, unit, cmd, true).is_some() {
                    self.log_event(t_us, chain, Some(unit), SimEventKind::FaultDrop);
                    if !degraded {
                        self.stats.dropped += 1;
                    }
                    return;
                }
                self.apply_bit_flips(chain, unit, cmd, &mut frames);
                let header = frames[0];
                let decision = match protocol::apply_hop(header) {
                    Ok(d) => d,
                    Err(_) => {
                        self.log_event(t_us, chain, Some(unit), SimEventKind::ParityDrop { frame: 0 });
                        if !degraded {
                            self.stats.dropped += 1;
                        }
                        return;
                    }
                };
                if frames.len() > 1 && !frames[1].is_valid() {
                    self.log_event(t_us, chain, Some(unit), SimEventKind::ParityDrop { frame: 1 });
                    frames.truncate(1);
                    if !degraded {
                        self.stats.dropped += 1;
                        degraded = true;
                    }
                }
                match decision {
                    HopDecision::Forward(next) => {
                        frames[0] = next;
                        if unit + 1 < self.units[chain].len() {
                            let hop = self.latency.hop_duration_us();
                            self.push(
                                t_us + hop,
                                chain,
                                Pending::Command {
                                    unit: unit + 1,
                                    cmd,
                                    frames,
                                    degraded,
                                },
                            );
                        } else {
                            self.exit_chain(t_us, chain, next);
                            if !degraded {
                                self.stats.exited += 1;
                            }
                        }
                    }
                    HopDecision::Consume => self.consume(t_us, chain, unit, &frames, degraded),
                }
            }
        }
    }

    fn consume(&mut self, t_us: u64, chain: usize, unit: usize, frames: &[FrameByte], degraded: bool) {
        if !protocol::expects_second_byte(frames[0]) {
            let state = &mut self.units[chain][unit];
            state.phase = Phase::Idle;
            state.current = None;
            self.log_event(t_us, chain, Some(unit), SimEventKind::Stop);
            self.record(t_us, chain, unit);
            self.stats.consumed += 1;
            return;
        }
        match protocol::decode(frames) {
            Ok(VibrationCommand {
                action: Action::Start(v),
                ..
            }) => {
                let state = &mut self.units[chain][unit];
                state.phase = Phase::Active;
                state.current = Some(v);
                self.log_event(t_us, chain, Some(unit), SimEventKind::Start(v));
                self.record(t_us, chain, unit);
                if !degraded {
                    self.stats.consumed += 1;
                }
            }
            _ => {
                // Header arrived without its payload.
                let state = &mut self.units[chain][unit];
                state.phase = Phase::AwaitSecondByte;
                state.await_token += 1;
                let token = state.await_token;
                self.log_event(t_us, chain, Some(unit), SimEventKind::AwaitPayload);
                self.record(t_us, chain, unit);
                self.push(t_us + AWAIT_TIMEOUT_US, chain, Pending::Timeout { unit, token });
            }
        }
    }

    /// Unit state in effect at `t_us`, reconstructed from the trace.
    pub fn state_at(&self, chain: usize, unit: usize, t_us: u64) -> Result<TracePoint, SimError> {
        let trace = self.trace(chain, unit)?;
        let idx = trace.partition_point(|p| p.t_us <= t_us);
        Ok(if idx == 0 {
            TracePoint {
                t_us: 0,
                phase: Phase::Idle,
                vibration: None,
            }
        } else {
            trace[idx - 1]
        })
    }

    /// Simulated actuator acceleration in arbitrary units.
    ///
    /// Zero unless the unit is ACTIVE; otherwise `duty(intensity)` times a
    /// unit sine or square at the selected carrier frequency.
    pub fn sample_acceleration(&self, chain: usize, unit: usize, t_us: u64) -> Result<f64, SimError> {
        let point = self.state_at(chain, unit, t_us)?;
        Ok(match (point.phase, point.vibration) {
            (Phase::Active, Some(v)) => acceleration(&v, t_us as f64 * 1e-6),
            _ => 0.0,
        })
    }

    /// Acceleration sampled at `rate_hz` over `[start_us, end_us)`.
    pub fn acceleration_trace(
        &self,
        chain: usize,
        unit: usize,
        start_us: u64,
        end_us: u64,
        rate_hz: f64,
    ) -> Result<Vec<f64>, SimError> {
        self.unit(chain, unit)?;
        let n = ((end_us.saturating_sub(start_us)) as f64 * 1e-6 * rate_hz).floor() as usize;
        (0..n)
            .map(|i| {
                let t = start_us + (i as f64 * 1e6 / rate_hz).round() as u64;
                self.sample_acceleration(chain, unit, t)
            })
            .collect()
    }
}

/// Output model of an active unit at absolute time `t_s`.
pub fn acceleration(v: &Vibration, t_s: f64) -> f64 {
    let amplitude = protocol::duty_fraction(v.intensity);
    let phase = (TAU * v.frequency_hz() * t_s).sin();
    amplitude
        * match v.waveform {
            WaveSelect::Sine => phase,
            WaveSelect::Square => {
                if phase >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
}
