//! Reference waveforms and patterns.

use crate::pattern::{create_chain_grid, PatternDocument, UnitKey, Waveform};

/// The composed test waveforms shipped in `corpus/`, as JSON text.
pub const WAVEFORMS: [(&str, &str); 4] = [
    ("am_carrier", include_str!("../corpus/am_carrier.json")),
    ("bump_then_buzz", include_str!("../corpus/bump_then_buzz.json")),
    ("rising_chirp", include_str!("../corpus/rising_chirp.json")),
    ("pulse_train", include_str!("../corpus/pulse_train.json")),
];

/// 4×6 forearm layout with the consonant-V recipe (SINE 300 Hz × SINE 8 Hz)
/// on the last unit of every chain from 0 to 400 ms.
pub fn consonant_v() -> PatternDocument {
    let mut doc = PatternDocument::new("consonant_v");
    for row in 0..4 {
        create_chain_grid(&mut doc, 6, (0.0, f64::from(row) * 40.0), 40.0).expect("4×6 fits");
    }
    doc.waveform_library.insert(
        "Consonant_V".into(),
        Waveform::product(vec![Waveform::sine(300.0), Waveform::sine(8.0)]),
    );
    for chain in 0..4 {
        doc.assign(UnitKey { chain, address: 5 }, "Consonant_V", 0, 400);
    }
    doc
}
