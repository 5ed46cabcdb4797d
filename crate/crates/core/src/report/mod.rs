//! Latency, bandwidth, battery and voltage tables.
//!
//! Reports serialize as line-oriented text: a `report=<kind>` line, a
//! `fingerprint=<sha256>` line over the inputs, then one row per line as
//! space-separated `key=value` pairs in a fixed column order.

mod fidelity;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fidelity::{envelope_fidelity, pearson, Fidelity};

use crate::pattern::{PatternError, TimedCommand};
use crate::protocol::{VibrationCommand, WaveSelect};
use crate::sim::ladder::{ACTUATOR_MIN_V, BENCH_CHAIN_LEN, MCU_MIN_V};
use crate::sim::power::estimate;
use crate::sim::{ChainSim, LatencyModel, LoopMode, SimError, SimEventKind, Topology};
use crate::transport::{dispatch, schedule, SimLoopback, TransportError, TICK_MS};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Latency,
    Bandwidth,
    Power,
    VoltageSweep,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Latency => "latency",
            Self::Bandwidth => "bandwidth",
            Self::Power => "power",
            Self::VoltageSweep => "voltage_sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Latency, Self::Bandwidth, Self::Power, Self::VoltageSweep]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

/// One table row: ordered `(key, value)` cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Row(pub Vec<(String, String)>);

impl Row {
    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.push((key.to_owned(), value.to_string()));
        self
    }

    fn num(self, key: &str, value: f64, decimals: usize) -> Self {
        self.with(key, format!("{value:.decimals$}"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub fingerprint: String,
    pub rows: Vec<Row>,
}

impl Report {
    fn new(kind: ReportKind, inputs: &impl Serialize, rows: Vec<Row>) -> Self {
        debug_assert!(!rows.is_empty());
        let canonical = serde_json::to_vec(&(kind, inputs)).expect("report inputs serialize");
        Self {
            kind,
            fingerprint: hex::encode(Sha256::digest(&canonical)),
            rows,
        }
    }

    /// First row that has a cell named `key`.
    pub fn find(&self, key: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.get(key).is_some())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("report={}\nfingerprint={}\n", self.kind.as_str(), self.fingerprint);
        for row in &self.rows {
            let cells: Vec<String> = row.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(out, "{}", cells.join(" ")).expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |key: &str| -> Result<String, ReportError> {
            let (line, l) = lines.next().ok_or(ReportError::Parse {
                line: 0,
                message: format!("missing `{key}=` line"),
            })?;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_owned)
                .ok_or(ReportError::Parse {
                    line,
                    message: format!("expected `{key}=`"),
                })
        };
        let kind_text = header("report")?;
        let kind = ReportKind::parse(&kind_text).ok_or(ReportError::Parse {
            line: 1,
            message: format!("unknown report kind `{kind_text}`"),
        })?;
        let fingerprint = header("fingerprint")?;
        let mut rows = Vec::new();
        for (line, l) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let cells = l
                .split_whitespace()
                .map(|cell| {
                    cell.split_once('=')
                        .map(|(k, v)| (k.to_owned(), v.to_owned()))
                        .ok_or(ReportError::Parse {
                            line,
                            message: format!("cell `{cell}` is not key=value"),
                        })
                })
                .collect::<Result<_, _>>()?;
            rows.push(Row(cells));
        }
        Ok(Self {
            kind,
            fingerprint,
            rows,
        })
    }
}

/// Activation time of every unit on the longest chain, measured in the
/// simulator one unit at a time, plus the breakdown totals.
pub fn latency_report(topology: &Topology, latency: &LatencyModel) -> Result<Report, ReportError> {
    topology.validate()?;
    latency.validate()?;
    let len = topology.longest_chain();
    let mut rows = Vec::with_capacity(len + 1);
    let mut last_us = latency.ble_one_way_us();
    for unit in 0..len {
        let mut sim = ChainSim::new(Topology::from_lengths(&[len]), *latency)?;
        sim.inject_packet(0, &[VibrationCommand::start(unit as u8, 15, 2, WaveSelect::Sine)], 0)?;
        let t_us = sim
            .run_to_idle()
            .iter()
            .find(|e| matches!(e.kind, SimEventKind::Start(_)))
            .map(|e| e.t_us)
            .expect("a START on an idle chain activates its target");
        last_us = t_us;
        rows.push(
            Row::default()
                .with("unit", unit)
                .with("hops", unit + 1)
                .num("activation_ms", t_us as f64 / 1000.0, 3),
        );
    }
    rows.push(
        Row::default()
            .num("ble_one_way_ms", latency.ble_one_way_us() as f64 / 1000.0, 3)
            .num("ble_processing_ms", latency.ble_processing_ms, 3)
            .num("hop_us", latency.hop_duration_us() as f64, 3)
            .with("chain_units", len)
            .num("chain_ms", (len as u64 * latency.hop_duration_us()) as f64 / 1000.0, 3)
            .num("total_ms", last_us as f64 / 1000.0, 3),
    );
    Ok(Report::new(ReportKind::Latency, &(topology, latency), rows))
}

/// Schedules and dispatches `packets` full packets (five STARTs each, one
/// per 5 ms tick) into the simulator and counts what arrives.
pub fn bandwidth_report(topology: &Topology, latency: &LatencyModel, packets: usize) -> Result<Report, ReportError> {
    topology.validate()?;
    let units: Vec<(u8, u8)> = topology
        .chains
        .iter()
        .enumerate()
        .flat_map(|(c, spec)| (0..spec.units).map(move |u| (c as u8, u as u8)))
        .collect();
    let mut stream = Vec::with_capacity(packets * 5);
    for p in 0..packets {
        for slot in 0..5 {
            let (chain, address) = units[(p * 5 + slot) % units.len()];
            stream.push(TimedCommand {
                t_ms: p as u64 * TICK_MS,
                chain,
                command: VibrationCommand::start(address, ((p + slot) % 16) as u8, (slot % 8) as u8, WaveSelect::Sine),
            });
        }
    }
    let plan = schedule(&stream);
    let mut endpoint = SimLoopback::new(ChainSim::new(topology.clone(), *latency)?);
    let delivery = dispatch(&plan.packets, &mut endpoint)?;
    let times = endpoint.inject_times_us().to_vec();
    let mut sim = endpoint.into_sim();
    sim.run_to_idle();
    let stats = sim.stats();

    // packets per second over [first send, last send + one tick)
    let window_s = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (b - a + TICK_MS * 1000) as f64 / 1e6,
        _ => 0.0,
    };
    let rate = if window_s > 0.0 { times.len() as f64 / window_s } else { 0.0 };
    let rows = vec![
        Row::default()
            .with("packets", delivery.packets)
            .with("commands_sent", delivery.commands)
            .with("commands_delivered", stats.consumed)
            .with("commands_lost", stats.dropped + stats.exited)
            .with("spills", plan.spills.len())
            .num("window_s", window_s, 3)
            .num("packet_rate_hz", rate, 3)
            .num("command_rate_hz", if window_s > 0.0 { stats.consumed as f64 / window_s } else { 0.0 }, 3),
    ];
    Ok(Report::new(ReportKind::Bandwidth, &(topology, latency, packets), rows))
}

/// A power scenario: `active` actuators driven continuously at full duty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryScenario {
    pub label: String,
    pub units: usize,
    pub active: f64,
    pub capacity_mah: f64,
}

impl BatteryScenario {
    pub fn new(label: &str, units: usize, active: f64, capacity_mah: f64) -> Self {
        Self {
            label: label.to_owned(),
            units,
            active,
            capacity_mah,
        }
    }
}

/// Two 16-unit chains on 500 mAh and four on 8200 mAh, idle and with some actuators on.
pub fn published_scenarios() -> Vec<BatteryScenario> {
    vec![
        BatteryScenario::new("32-idle", 32, 0.0, 500.0),
        BatteryScenario::new("32-active2", 32, 2.0, 500.0),
        BatteryScenario::new("64-idle", 64, 0.0, 8200.0),
        BatteryScenario::new("64-active8", 64, 8.0, 8200.0),
    ]
}

/// The published scenarios followed by `extra`.
pub fn battery_report(extra: &[BatteryScenario]) -> Report {
    let scenarios: Vec<BatteryScenario> = published_scenarios().into_iter().chain(extra.iter().cloned()).collect();
    let rows = scenarios
        .iter()
        .map(|s| {
            let e = estimate(s.units, s.active, s.capacity_mah);
            Row::default()
                .with("scenario", s.label.replace(char::is_whitespace, "_"))
                .with("units", s.units)
                .num("active", s.active, 2)
                .num("capacity_mah", s.capacity_mah, 0)
                .num("current_ma", e.current_a * 1000.0, 1)
                .num("hours", e.battery_hours, 2)
        })
        .collect();
    Report::new(ReportKind::Power, &scenarios, rows)
}

/// Last-node voltages for `k = 0..=n` head-first active units on a bench
/// chain of `max(20, longest chain)` units, both loop modes.
pub fn voltage_sweep(topology: &Topology) -> Result<Report, ReportError> {
    topology.validate()?;
    let ladder = topology.ladder();
    let n = BENCH_CHAIN_LEN.max(topology.longest_chain());
    let mut rows = Vec::with_capacity(n + 2);
    let (mut mcu_cross, mut act_cross) = (None, None);
    for k in 0..=n {
        let open = ladder.head_first(LoopMode::Open, n, k);
        let closed = ladder.head_first(LoopMode::Closed, n, k);
        let mut row = Row::default()
            .with("active", k)
            .num("v_mcu", open.mcu, 4)
            .num("v_act", open.actuator, 4)
            .num("v_mcu_closed", closed.mcu, 4)
            .num("v_act_closed", closed.actuator, 4);
        let mut notes = Vec::new();
        if mcu_cross.is_none() && !open.mcu_ok() {
            mcu_cross = Some(k);
            notes.push(format!("mcu_below_{MCU_MIN_V}V"));
        }
        if act_cross.is_none() && !open.actuator_ok() {
            act_cross = Some(k);
            notes.push(format!("actuator_below_{ACTUATOR_MIN_V}V"));
        }
        if !notes.is_empty() {
            row = row.with("note", notes.join(","));
        }
        rows.push(row);
    }
    let show = |c: Option<usize>| c.map_or("none".to_owned(), |k| k.to_string());
    rows.push(
        Row::default()
            .with("bench_units", n)
            .with("segment_ohm", format!("{:.6}", ladder.segment_ohm))
            .with("mcu_crossing", show(mcu_cross))
            .with("actuator_crossing", show(act_cross)),
    );
    Ok(Report::new(ReportKind::VoltageSweep, topology, rows))
}
