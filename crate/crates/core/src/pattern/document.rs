use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use super::PatternError;
use crate::protocol::WaveSelect;
use crate::sim::{Topology, MAX_CHAINS, MAX_UNITS_PER_CHAIN};

pub const SCHEMA_VERSION: u32 = 1;

/// A unit on the editor canvas. Coordinates are cosmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRef {
    pub address: u8,
    #[serde(default)]
    pub canvas_x: f64,
    #[serde(default)]
    pub canvas_y: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainLayout {
    pub units: Vec<UnitRef>,
}

/// A waveform placed on one unit over `[t_start_ms, t_end_ms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub chain: u8,
    pub address: u8,
    pub waveform_id: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    /// Drive waveform selected in every START payload.
    #[serde(default)]
    pub drive: WaveSelect,
}

/// Physical unit identity: chain plus position on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub chain: u8,
    pub address: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDocument {
    #[serde(default = "schema_version")]
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub chains: Vec<ChainLayout>,
    #[serde(default)]
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub waveform_library: BTreeMap<String, Waveform>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Default for PatternDocument {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            name: String::new(),
            chains: Vec::new(),
            assignments: Vec::new(),
            waveform_library: BTreeMap::new(),
        }
    }
}

impl PatternDocument {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PatternError> {
        serde_json::from_str(text).map_err(|e| PatternError::Parse {
            line: Some(e.line()),
            field: "document".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern document serializes")
    }

    pub fn unit_count(&self) -> usize {
        self.chains.iter().map(|c| c.units.len()).sum()
    }

    /// End of the last assignment.
    pub fn duration_ms(&self) -> u64 {
        self.assignments.iter().map(|a| a.t_end_ms).max().unwrap_or(0)
    }

    /// Simulator topology mirroring the document's chains.
    pub fn topology(&self) -> Topology {
        let lengths: Vec<usize> = self.chains.iter().map(|c| c.units.len()).collect();
        Topology::from_lengths(&lengths)
    }

    pub fn assign(
        &mut self,
        unit: UnitKey,
        waveform_id: impl Into<String>,
        t_start_ms: u64,
        t_end_ms: u64,
    ) -> &mut Self {
        self.assignments.push(Assignment {
            chain: unit.chain,
            address: unit.address,
            waveform_id: waveform_id.into(),
            t_start_ms,
            t_end_ms,
            drive: WaveSelect::Sine,
        });
        self
    }

    /// Checks every document invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), PatternError> {
        if self.version != SCHEMA_VERSION {
            return Err(PatternError::validation(
                "version",
                format!("unsupported schema version {}", self.version),
            ));
        }
        if self.chains.len() > MAX_CHAINS {
            return Err(PatternError::Capacity(format!(
                "{} chains exceed the limit of {MAX_CHAINS}",
                self.chains.len()
            )));
        }
        for (c, chain) in self.chains.iter().enumerate() {
            if chain.units.is_empty() {
                return Err(PatternError::validation(format!("chains[{c}].units"), "chain has no units"));
            }
            if chain.units.len() > MAX_UNITS_PER_CHAIN {
                return Err(PatternError::Capacity(format!(
                    "chain {c} has {} units, the limit is {MAX_UNITS_PER_CHAIN}",
                    chain.units.len()
                )));
            }
            for (i, u) in chain.units.iter().enumerate() {
                if usize::from(u.address) != i {
                    return Err(PatternError::validation(
                        format!("chains[{c}].units[{i}].address"),
                        format!("address {} must equal its position {i}", u.address),
                    ));
                }
            }
        }
        for (id, w) in &self.waveform_library {
            w.validate_at(&format!("waveform_library.{id}"))?;
        }
        for (i, a) in self.assignments.iter().enumerate() {
            let field = |f: &str| format!("assignments[{i}].{f}");
            let Some(chain) = self.chains.get(usize::from(a.chain)) else {
                return Err(PatternError::validation(field("chain"), format!("no chain {}", a.chain)));
            };
            if usize::from(a.address) >= chain.units.len() {
                return Err(PatternError::validation(
                    field("address"),
                    format!("chain {} has no unit {}", a.chain, a.address),
                ));
            }
            if a.t_start_ms >= a.t_end_ms {
                return Err(PatternError::validation(
                    field("t_end_ms"),
                    format!("end {} must be after start {}", a.t_end_ms, a.t_start_ms),
                ));
            }
            if !self.waveform_library.contains_key(&a.waveform_id) {
                return Err(PatternError::validation(
                    field("waveform_id"),
                    format!("unknown waveform `{}`", a.waveform_id),
                ));
            }
        }
        self.check_overlaps()
    }

    fn check_overlaps(&self) -> Result<(), PatternError> {
        let mut by_unit: BTreeMap<UnitKey, Vec<&Assignment>> = BTreeMap::new();
        for a in &self.assignments {
            by_unit.entry(a.unit()).or_default().push(a);
        }
        for (unit, mut list) in by_unit {
            list.sort_by_key(|a| (a.t_start_ms, a.t_end_ms));
            for w in list.windows(2) {
                if w[1].t_start_ms < w[0].t_end_ms {
                    return Err(PatternError::Overlap {
                        chain: unit.chain,
                        address: unit.address,
                        first: (w[0].t_start_ms, w[0].t_end_ms),
                        second: (w[1].t_start_ms, w[1].t_end_ms),
                    });
                }
            }
        }
        Ok(())
    }
}

impl Assignment {
    pub fn unit(&self) -> UnitKey {
        UnitKey {
            chain: self.chain,
            address: self.address,
        }
    }

    pub fn contains(&self, t_ms: f64) -> bool {
        self.t_start_ms as f64 <= t_ms && t_ms < self.t_end_ms as f64
    }
}

/// Appends a `chain_len`-unit chain laid out left to right from `origin`.
/// Returns the new chain's index.
pub fn create_chain_grid(
    doc: &mut PatternDocument,
    chain_len: usize,
    origin: (f64, f64),
    spacing: f64,
) -> Result<u8, PatternError> {
    if doc.chains.len() >= MAX_CHAINS {
        return Err(PatternError::Capacity(format!(
            "a document holds at most {MAX_CHAINS} chains"
        )));
    }
    if chain_len == 0 || chain_len > MAX_UNITS_PER_CHAIN {
        return Err(PatternError::Capacity(format!(
            "chain length {chain_len} is outside 1..={MAX_UNITS_PER_CHAIN}"
        )));
    }
    let units = (0..chain_len)
        .map(|i| UnitRef {
            address: i as u8,
            canvas_x: origin.0 + i as f64 * spacing,
            canvas_y: origin.1,
        })
        .collect();
    doc.chains.push(ChainLayout { units });
    Ok((doc.chains.len() - 1) as u8)
}

/// Units whose assignment interval contains `t_ms` (half-open).
pub fn active_units_at(doc: &PatternDocument, t_ms: f64) -> BTreeSet<UnitKey> {
    doc.assignments
        .iter()
        .filter(|a| a.contains(t_ms))
        .map(Assignment::unit)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> PatternDocument {
        let mut doc = PatternDocument::new("grid");
        for r in 0..rows {
            create_chain_grid(&mut doc, cols, (0.0, r as f64 * 40.0), 40.0).unwrap();
        }
        doc
    }

    #[test]
    fn phonemic_layout() {
        let doc = grid(4, 6);
        assert_eq!(doc.chains.len(), 4);
        assert_eq!(doc.unit_count(), 24);
        assert_eq!(doc.chains[2].units[5].canvas_x, 200.0);
        assert_eq!(doc.chains[2].units[5].canvas_y, 80.0);
        doc.validate().unwrap();
        assert_eq!(doc.topology().unit_count(), 24);
    }

    #[test]
    fn capacity_limits() {
        let mut doc = grid(8, 2);
        assert!(matches!(create_chain_grid(&mut doc, 2, (0.0, 0.0), 1.0), Err(PatternError::Capacity(_))));
        let mut doc = PatternDocument::default();
        assert!(matches!(create_chain_grid(&mut doc, 17, (0.0, 0.0), 1.0), Err(PatternError::Capacity(_))));
        assert!(create_chain_grid(&mut doc, 16, (0.0, 0.0), 1.0).is_ok());
    }

    #[test]
    fn half_open_activity() {
        let mut doc = grid(1, 2);
        doc.waveform_library.insert("w".into(), Waveform::sine(200.0));
        let u = UnitKey { chain: 0, address: 1 };
        doc.assign(u, "w", 100, 500);
        assert!(active_units_at(&doc, 0.0).is_empty());
        assert_eq!(active_units_at(&doc, 100.0), BTreeSet::from([u]));
        assert_eq!(active_units_at(&doc, 499.9), BTreeSet::from([u]));
        assert!(active_units_at(&doc, 500.0).is_empty());
        assert_eq!(doc.duration_ms(), 500);
    }

    #[test]
    fn invariant_violations() {
        let mut doc = grid(1, 3);
        doc.waveform_library.insert("w".into(), Waveform::sine(200.0));
        let u = UnitKey { chain: 0, address: 0 };

        let mut bad = doc.clone();
        bad.assign(u, "missing", 0, 10);
        assert!(matches!(bad.validate(), Err(PatternError::Validation { ref field, .. }) if field == "assignments[0].waveform_id"));

        let mut bad = doc.clone();
        bad.assign(u, "w", 10, 10);
        assert!(matches!(bad.validate(), Err(PatternError::Validation { ref field, .. }) if field == "assignments[0].t_end_ms"));

        let mut bad = doc.clone();
        bad.assign(UnitKey { chain: 0, address: 3 }, "w", 0, 10);
        assert!(bad.validate().is_err());

        let mut bad = doc.clone();
        bad.chains[0].units[1].address = 2;
        assert!(matches!(bad.validate(), Err(PatternError::Validation { ref field, .. }) if field == "chains[0].units[1].address"));

        let mut bad = doc.clone();
        bad.chains[0].units = (0..17).map(|i| UnitRef { address: i, canvas_x: 0.0, canvas_y: 0.0 }).collect();
        assert!(matches!(bad.validate(), Err(PatternError::Capacity(_))));

        let mut bad = doc.clone();
        bad.assign(u, "w", 0, 100).assign(u, "w", 99, 200);
        assert!(matches!(bad.validate(), Err(PatternError::Overlap { chain: 0, address: 0, .. })));

        let mut ok = doc.clone();
        ok.assign(u, "w", 0, 100).assign(u, "w", 100, 200);
        ok.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut doc = grid(2, 3);
        doc.waveform_library.insert("buzz".into(), Waveform::sine(235.0));
        doc.assign(UnitKey { chain: 1, address: 2 }, "buzz", 0, 250);
        let back = PatternDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        let minimal = PatternDocument::from_json("{}").unwrap();
        assert_eq!(minimal, PatternDocument::default());
        assert!(matches!(PatternDocument::from_json("{\"chains\": 3}"), Err(PatternError::Parse { .. })));
    }
}
