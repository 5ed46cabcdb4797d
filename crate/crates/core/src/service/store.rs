use std::collections::BTreeMap;

use serde::Serialize;

use super::ServiceError;
use crate::pattern::{PatternDocument, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredPattern {
    pub id: String,
    pub version: u64,
    pub document: PatternDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatternSummary {
    pub id: String,
    pub version: u64,
    pub name: String,
    pub units: usize,
    pub duration_ms: u64,
}

/// In-memory pattern documents with optimistic versioning.
#[derive(Debug, Default)]
pub struct PatternStore {
    patterns: BTreeMap<String, StoredPattern>,
    next_id: u64,
}

impl PatternStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, document: PatternDocument) -> Result<StoredPattern, ServiceError> {
        document.validate()?;
        self.next_id += 1;
        let stored = StoredPattern {
            id: format!("p{}", self.next_id),
            version: 1,
            document,
        };
        self.patterns.insert(stored.id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn get(&self, id: &str) -> Result<&StoredPattern, ServiceError> {
        self.patterns.get(id).ok_or_else(|| ServiceError::not_found("pattern", id))
    }

    pub fn list(&self) -> Vec<PatternSummary> {
        self.patterns
            .values()
            .map(|p| PatternSummary {
                id: p.id.clone(),
                version: p.version,
                name: p.document.name.clone(),
                units: p.document.unit_count(),
                duration_ms: p.document.duration_ms(),
            })
            .collect()
    }

    /// Replaces a document if `expected_version` is current.
    pub fn update(
        &mut self,
        id: &str,
        expected_version: u64,
        document: PatternDocument,
    ) -> Result<StoredPattern, ServiceError> {
        let current = self
            .patterns
            .get_mut(id)
            .ok_or_else(|| ServiceError::not_found("pattern", id))?;
        if current.version != expected_version {
            return Err(ServiceError::Conflict(format!(
                "pattern {id} is at version {}, update was based on {expected_version}",
                current.version
            )));
        }
        document.validate()?;
        current.version += 1;
        current.document = document;
        Ok(current.clone())
    }

    pub fn delete(&mut self, id: &str) -> Result<StoredPattern, ServiceError> {
        self.patterns
            .remove(id)
            .ok_or_else(|| ServiceError::not_found("pattern", id))
    }
}

/// Named reusable waveforms.
#[derive(Debug, Default)]
pub struct WaveformLibrary {
    waveforms: BTreeMap<String, Waveform>,
}

impl WaveformLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, name: &str, waveform: Waveform) -> Result<(), ServiceError> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(ServiceError::Validation {
                field: "name".into(),
                message: "waveform names are non-empty and contain no whitespace".into(),
            });
        }
        waveform.validate()?;
        self.waveforms.insert(name.to_owned(), waveform);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Waveform, ServiceError> {
        self.waveforms
            .get(name)
            .ok_or_else(|| ServiceError::not_found("waveform", name))
    }

    pub fn names(&self) -> Vec<String> {
        self.waveforms.keys().cloned().collect()
    }

    pub fn delete(&mut self, name: &str) -> Result<Waveform, ServiceError> {
        self.waveforms
            .remove(name)
            .ok_or_else(|| ServiceError::not_found("waveform", name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::create_chain_grid;

    fn grid(rows: usize) -> PatternDocument {
        let mut doc = PatternDocument::new("grid");
        for r in 0..rows {
            create_chain_grid(&mut doc, 6, (0.0, r as f64), 1.0).unwrap();
        }
        doc
    }

    #[test]
    fn crud_with_versions() {
        let mut store = PatternStore::new();
        let p = store.create(grid(4)).unwrap();
        assert_eq!(store.get(&p.id).unwrap().document.unit_count(), 24);
        let p2 = store.update(&p.id, 1, grid(2)).unwrap();
        assert_eq!(p2.version, 2);
        assert!(matches!(store.update(&p.id, 1, grid(3)), Err(ServiceError::Conflict(_))));
        assert_eq!(store.list().len(), 1);
        store.delete(&p.id).unwrap();
        assert!(matches!(store.get(&p.id), Err(ServiceError::NotFound { .. })));
    }

    #[test]
    fn invalid_update_keeps_old_document() {
        let mut store = PatternStore::new();
        let p = store.create(grid(1)).unwrap();
        let mut bad = grid(1);
        bad.chains[0].units = (0..17)
            .map(|i| crate::pattern::UnitRef {
                address: i,
                canvas_x: 0.0,
                canvas_y: 0.0,
            })
            .collect();
        assert!(matches!(store.update(&p.id, 1, bad), Err(ServiceError::Pattern(_))));
        assert_eq!(store.get(&p.id).unwrap().version, 1);
    }

    #[test]
    fn library() {
        let mut lib = WaveformLibrary::new();
        lib.put("buzz", Waveform::sine(200.0)).unwrap();
        assert!(lib.put("bad name", Waveform::sine(200.0)).is_err());
        assert!(lib.put("loud", Waveform::Oscillator(crate::pattern::Oscillator {
            amplitude: 2.0,
            ..crate::pattern::Oscillator::new(crate::pattern::Shape::Sine, 200.0)
        }))
        .is_err());
        assert_eq!(lib.names(), vec!["buzz"]);
        assert!(lib.get("nope").is_err());
    }
}
