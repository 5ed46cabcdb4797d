//! Keyframe-JSON and sample-CSV interchange.
//!
//! Keyframe-JSON is a flat object:
//!
//! ```json
//! {"amplitude": [[0, 0], [100, 1], [400, 0]], "frequency": [[0, 170], [400, 235]]}
//! ```
//!
//! Times are milliseconds. `amplitude` values lie in `[0, 1]`; `frequency`
//! values are Hz and default to a constant 170 Hz carrier when absent.

use serde::{Deserialize, Serialize};

use super::waveform::{Envelope, Frequency, Oscillator, Shape, Waveform};
use super::PatternError;
use crate::segment::{SampledWaveform, SegmentError};

pub const DEFAULT_CARRIER_HZ: f64 = 170.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeDoc {
    amplitude: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequency: Option<Vec<(f64, f64)>>,
}

/// Parses keyframe-JSON into `OSCILLATOR x ENVELOPE(KEYFRAMES)`.
pub fn import_keyframes(text: &str) -> Result<Waveform, PatternError> {
    let doc: KeyframeDoc = serde_json::from_str(text).map_err(|e| PatternError::Parse {
        line: Some(e.line()),
        field: "document".into(),
        message: e.to_string(),
    })?;
    if doc.amplitude.is_empty() {
        return Err(PatternError::Parse {
            line: None,
            field: "amplitude".into(),
            message: "keyframe list is empty".into(),
        });
    }
    let frequency_hz = match doc.frequency {
        None => Frequency::Constant(DEFAULT_CARRIER_HZ),
        Some(k) if k.is_empty() => {
            return Err(PatternError::Parse {
                line: None,
                field: "frequency".into(),
                message: "keyframe list is empty".into(),
            })
        }
        Some(k) => Frequency::Keyframes(k),
    };
    let w = Waveform::Multiply {
        children: vec![
            Waveform::Oscillator(Oscillator {
                shape: Shape::Sine,
                frequency_hz,
                amplitude: 1.0,
                phase: 0.0,
            }),
            Waveform::Envelope(Envelope::Keyframes {
                keyframes: doc.amplitude,
            }),
        ],
    };
    w.validate_at("keyframes").map_err(|e| match e {
        PatternError::Validation { field, message } => PatternError::Validation {
            field: field
                .replace("keyframes.children[0].frequency_hz", "frequency")
                .replace("keyframes.children[1].keyframes", "amplitude"),
            message,
        },
        other => other,
    })?;
    Ok(w)
}

/// Inverse of [`import_keyframes`] for waveforms of that exact shape.
pub fn export_keyframes(w: &Waveform) -> Result<String, PatternError> {
    let unsupported = || PatternError::validation("waveform", "only sine x keyframe-envelope waveforms export to keyframe-JSON");
    let Waveform::Multiply { children } = w else {
        return Err(unsupported());
    };
    let [Waveform::Oscillator(osc), Waveform::Envelope(Envelope::Keyframes { keyframes })] = children.as_slice() else {
        return Err(unsupported());
    };
    if osc.shape != Shape::Sine || osc.amplitude != 1.0 || osc.phase != 0.0 {
        return Err(unsupported());
    }
    let frequency = match &osc.frequency_hz {
        Frequency::Constant(hz) if *hz == DEFAULT_CARRIER_HZ => None,
        Frequency::Constant(hz) => Some(vec![(0.0, *hz)]),
        Frequency::Keyframes(k) => Some(k.clone()),
    };
    let doc = KeyframeDoc {
        amplitude: keyframes.clone(),
        frequency,
    };
    Ok(serde_json::to_string(&doc).expect("keyframe document serializes"))
}

/// Parses sample-CSV (`rate=<hz>` header, one sample per line).
pub fn import_csv(text: &str) -> Result<SampledWaveform, PatternError> {
    SampledWaveform::from_csv(text).map_err(|e| match e {
        SegmentError::Parse { line, message } => PatternError::Parse {
            line: Some(line),
            field: if line == 1 { "rate".into() } else { "samples".into() },
            message,
        },
        other => PatternError::Segment(other),
    })
}

pub fn export_csv(w: &SampledWaveform) -> String {
    w.to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_envelope() {
        let w = import_keyframes(r#"{"amplitude": [[0, 0], [100, 1], [400, 0]]}"#).unwrap();
        assert_eq!(w.duration_ms(), Some(400.0));
        assert_eq!(w.max_frequency_hz(), DEFAULT_CARRIER_HZ);
    }

    #[test]
    fn empty_list_is_parse_error() {
        let e = import_keyframes(r#"{"amplitude": []}"#).unwrap_err();
        assert!(matches!(e, PatternError::Parse { ref field, .. } if field == "amplitude"), "{e}");
    }

    #[test]
    fn malformed_reports_line() {
        let e = import_keyframes("{\n  \"amplitude\": [[0, 0],\n  [1, oops]]\n}").unwrap_err();
        assert!(matches!(e, PatternError::Parse { line: Some(3), .. }), "{e}");
        let e = import_keyframes(r#"{"amplitude": [[0, 1]], "extra": 1}"#).unwrap_err();
        assert!(matches!(e, PatternError::Parse { .. }));
    }

    #[test]
    fn range_and_order_are_validation_errors() {
        let e = import_keyframes(r#"{"amplitude": [[0, 0], [100, 1.5]]}"#).unwrap_err();
        assert_eq!(
            e,
            PatternError::Validation {
                field: "amplitude[1]".into(),
                message: "1.5 is outside [0, 1]".into()
            }
        );
        let e = import_keyframes(r#"{"amplitude": [[0, 0], [100, 1], [50, 0]]}"#).unwrap_err();
        assert!(matches!(e, PatternError::Validation { ref field, .. } if field == "amplitude[2]"), "{e}");
        let e = import_keyframes(r#"{"amplitude": [[0, 1]], "frequency": [[0, 200], [0, 300]]}"#).unwrap_err();
        assert!(matches!(e, PatternError::Validation { ref field, .. } if field == "frequency[1]"), "{e}");
    }

    #[test]
    fn keyframe_round_trip() {
        for text in [
            r#"{"amplitude":[[0.0,0.0],[100.0,1.0],[400.0,0.0]]}"#,
            r#"{"amplitude":[[0.0,0.5],[250.0,1.0]],"frequency":[[0.0,123.0],[250.0,384.0]]}"#,
        ] {
            let w = import_keyframes(text).unwrap();
            assert_eq!(export_keyframes(&w).unwrap(), text);
            assert_eq!(import_keyframes(&export_keyframes(&w).unwrap()).unwrap(), w);
        }
        assert!(export_keyframes(&Waveform::sine(200.0)).is_err());
    }

    #[test]
    fn csv_errors_carry_lines() {
        assert!(matches!(import_csv("rate=100\n"), Err(PatternError::Parse { .. })));
        assert!(matches!(import_csv("rate=100\n0.5\nx\n"), Err(PatternError::Parse { line: Some(3), .. })));
        let w = import_csv("rate=4\n0\n0.5\n1\n-1\n").unwrap();
        assert_eq!(w.duration_s(), 1.0);
        assert_eq!(import_csv(&export_csv(&w)).unwrap(), w);
    }
}
