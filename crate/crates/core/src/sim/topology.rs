use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ladder::{LadderModel, NodeVoltages, DEFAULT_SEGMENT_OHM};
use super::SimError;

pub const MAX_CHAINS: usize = 8;
pub const MAX_UNITS_PER_CHAIN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopMode {
    #[default]
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub units: usize,
    #[serde(default)]
    pub loop_mode: LoopMode,
}

/// Physical layout of a control unit and its chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub chains: Vec<ChainSpec>,
    #[serde(default = "default_segment_ohm")]
    pub wire_resistance_per_segment_ohm: f64,
    #[serde(default = "default_supply")]
    pub supply_voltage_v: f64,
}

fn default_segment_ohm() -> f64 {
    DEFAULT_SEGMENT_OHM
}

fn default_supply() -> f64 {
    5.0
}

impl Topology {
    /// `chains` open chains of `units` each, calibrated wire resistance.
    pub fn uniform(chains: usize, units: usize) -> Self {
        Self::from_lengths(&vec![units; chains])
    }

    pub fn from_lengths(lengths: &[usize]) -> Self {
        Self {
            chains: lengths
                .iter()
                .map(|&units| ChainSpec {
                    units,
                    loop_mode: LoopMode::Open,
                })
                .collect(),
            wire_resistance_per_segment_ohm: DEFAULT_SEGMENT_OHM,
            supply_voltage_v: 5.0,
        }
    }

    pub fn with_loop_mode(mut self, mode: LoopMode) -> Self {
        for chain in &mut self.chains {
            chain.loop_mode = mode;
        }
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.chains.is_empty() {
            return Err(SimError::Topology("at least one chain is required".into()));
        }
        if self.chains.len() > MAX_CHAINS {
            return Err(SimError::Topology(format!(
                "{} chains exceeds the limit of {MAX_CHAINS}",
                self.chains.len()
            )));
        }
        for (i, chain) in self.chains.iter().enumerate() {
            if chain.units > MAX_UNITS_PER_CHAIN {
                return Err(SimError::Topology(format!(
                    "chain {i} has {} units, limit is {MAX_UNITS_PER_CHAIN}",
                    chain.units
                )));
            }
        }
        let r = self.wire_resistance_per_segment_ohm;
        if !(r.is_finite() && r > 0.0) {
            return Err(SimError::Topology(format!(
                "wire resistance must be positive, got {r}"
            )));
        }
        if !(self.supply_voltage_v.is_finite() && self.supply_voltage_v > 0.0) {
            return Err(SimError::Topology("supply voltage must be positive".into()));
        }
        Ok(())
    }

    pub fn unit_count(&self) -> usize {
        self.chains.iter().map(|c| c.units).sum()
    }

    pub fn longest_chain(&self) -> usize {
        self.chains.iter().map(|c| c.units).max().unwrap_or(0)
    }

    pub fn ladder(&self) -> LadderModel {
        LadderModel {
            segment_ohm: self.wire_resistance_per_segment_ohm,
            supply_v: self.supply_voltage_v,
            ..LadderModel::default()
        }
    }

    /// Voltages seen by the last unit of `chain` for the given activation pattern.
    pub fn last_node_voltages(&self, chain: usize, active: &[bool]) -> Result<NodeVoltages, SimError> {
        let spec = self.chains.get(chain).ok_or(SimError::UnknownChain(chain))?;
        if active.len() != spec.units {
            return Err(SimError::Topology(format!(
                "chain {chain} has {} units but {} activation flags were given",
                spec.units,
                active.len()
            )));
        }
        Ok(self.ladder().last_node(spec.loop_mode, active))
    }
}

/// Transport latency constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub ble_one_way_ms: f64,
    pub hop_us: f64,
    pub ble_processing_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            ble_one_way_ms: 14.0,
            hop_us: 125.0,
            ble_processing_ms: 2.96,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("ble_one_way_ms", self.ble_one_way_ms),
            ("hop_us", self.hop_us),
            ("ble_processing_ms", self.ble_processing_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Topology(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn ble_one_way_us(&self) -> u64 {
        (self.ble_one_way_ms * 1000.0).round() as u64
    }

    pub fn hop_duration_us(&self) -> u64 {
        self.hop_us.round() as u64
    }

    /// Time from send until the unit at 0-based `hop` acts on a command.
    pub fn activation_delay_us(&self, hop: usize) -> u64 {
        self.ble_one_way_us() + (hop as u64 + 1) * self.hop_duration_us()
    }
}

/// Topology plus latency model, as stored in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(flatten)]
    pub topology: Topology,
    #[serde(default)]
    pub latency: LatencyModel,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        config.topology.validate()?;
        config.latency.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
