//! Interactive operations for the static demo page.
//!
//! Each export takes plain numbers or JSON text and returns JSON text, so the
//! page needs no generated bindings beyond strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vibraforge::pattern::{import_keyframes, sample, Waveform};
use vibraforge::report::envelope_fidelity;
use vibraforge::segment::segment;
use vibraforge::sim::{LadderModel, LatencyModel, LoopMode, ACTUATOR_MIN_V, MCU_MIN_V};

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub active: usize,
    pub v_mcu: f64,
    pub v_act: f64,
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub mode: LoopMode,
    pub points: Vec<SweepPoint>,
    pub mcu_min_v: f64,
    pub actuator_min_v: f64,
}

/// Voltage at the tail unit as `k` units are switched on head-first.
pub fn sweep(segment_ohm: f64, chain_len: usize, closed: bool) -> Result<Sweep, String> {
    if !(segment_ohm > 0.0 && segment_ohm.is_finite()) {
        return Err("segment resistance must be positive".into());
    }
    if !(1..=64).contains(&chain_len) {
        return Err("chain length must be between 1 and 64".into());
    }
    let ladder = LadderModel {
        segment_ohm,
        ..LadderModel::default()
    };
    let mode = if closed { LoopMode::Closed } else { LoopMode::Open };
    let points = (0..=chain_len)
        .map(|k| {
            let v = ladder.head_first(mode, chain_len, k);
            SweepPoint {
                active: k,
                v_mcu: v.mcu,
                v_act: v.actuator,
            }
        })
        .collect();
    Ok(Sweep {
        mode,
        points,
        mcu_min_v: MCU_MIN_V,
        actuator_min_v: ACTUATOR_MIN_V,
    })
}

fn parse_waveform(text: &str) -> Result<Waveform, String> {
    match serde_json::from_str::<Waveform>(text) {
        Ok(w) => {
            w.validate().map_err(|e| e.to_string())?;
            Ok(w)
        }
        Err(_) => import_keyframes(text).map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Serialize)]
pub struct SegmentView {
    pub t_ms: Vec<f64>,
    pub intensity: Vec<Option<u8>>,
    pub frequency_index: Vec<u8>,
}

/// Samples a composed or keyframe waveform and segments it into 5 ms frames.
pub fn segment_waveform(text: &str, duration_ms: f64) -> Result<SegmentView, String> {
    let w = parse_waveform(text)?;
    let duration_ms = w.duration_ms().unwrap_or(duration_ms);
    let sampled = sample(&w, 8000.0, duration_ms).map_err(|e| e.to_string())?;
    let stream = segment(&sampled).map_err(|e| e.to_string())?;
    Ok(SegmentView {
        t_ms: (0..stream.frames.len()).map(|i| i as f64 * 5.0).collect(),
        intensity: stream.frames.iter().map(|f| f.active.then_some(f.intensity)).collect(),
        frequency_index: stream.frames.iter().map(|f| f.frequency_index).collect(),
    })
}

/// Source and actuator envelopes for a waveform played on one unit.
pub fn trace(text: &str, ble_ms: f64) -> Result<vibraforge::report::Fidelity, String> {
    if !(0.0..=1000.0).contains(&ble_ms) {
        return Err("BLE latency must be within 0..1000 ms".into());
    }
    let w = parse_waveform(text)?;
    let latency = LatencyModel {
        ble_one_way_ms: ble_ms,
        ..LatencyModel::default()
    };
    envelope_fidelity(&w, &latency).map_err(|e| e.to_string())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = voltageSweep)]
pub fn voltage_sweep_js(segment_ohm: f64, chain_len: usize, closed: bool) -> Result<String, JsValue> {
    to_js(sweep(segment_ohm, chain_len, closed))
}

#[wasm_bindgen(js_name = segmentWaveform)]
pub fn segment_waveform_js(waveform_json: &str, duration_ms: f64) -> Result<String, JsValue> {
    to_js(segment_waveform(waveform_json, duration_ms))
}

#[wasm_bindgen(js_name = actuatorTrace)]
pub fn actuator_trace_js(waveform_json: &str, ble_ms: f64) -> Result<String, JsValue> {
    to_js(trace(waveform_json, ble_ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    const AM: &str = r#"{"kind":"multiply","children":[
        {"kind":"oscillator","shape":"sine","frequency_hz":200},
        {"kind":"oscillator","shape":"sine","frequency_hz":5}]}"#;

    #[test]
    fn sweep_falls_with_load() {
        let s = sweep(0.2, 20, false).unwrap();
        assert_eq!(s.points.len(), 21);
        assert!(s.points.windows(2).all(|w| w[1].v_act <= w[0].v_act));
        let closed = sweep(0.2, 20, true).unwrap();
        assert!(closed.points[20].v_act > s.points[20].v_act);
        assert!(sweep(-1.0, 4, false).is_err());
        assert!(sweep(0.2, 0, false).is_err());
    }

    #[test]
    fn segments_unbounded_waveform() {
        let v = segment_waveform(AM, 400.0).unwrap();
        assert_eq!(v.t_ms.len(), 80);
        assert!(v.frequency_index.iter().all(|&f| f == 3));
    }

    #[test]
    fn keyframe_text_is_accepted() {
        let kf = r#"{"amplitude":[[0,0],[100,1],[200,0]],"frequency":[[0,235],[200,235]]}"#;
        let v = segment_waveform(kf, 0.0).unwrap();
        assert_eq!(v.t_ms.len(), 40);
        assert!(segment_waveform("nope", 100.0).is_err());
    }

    #[test]
    fn trace_follows_source() {
        let text = vibraforge::corpus::WAVEFORMS[0].1;
        let f = trace(text, 14.0).unwrap();
        assert!(f.pearson > 0.9);
        assert!(trace(AM, 14.0).is_err());
        assert!(serde_json::from_str::<serde_json::Value>(&to_js(Ok(1)).unwrap()).is_ok());
    }
}
