use serde::Serialize;

use super::ReportError;
use crate::pattern::{compile, create_chain_grid, sample, PatternDocument, PatternError, UnitKey, Waveform, COMPILE_RATE_HZ};
use crate::segment::{envelope, frame_envelope, SampledWaveform};
use crate::sim::{ChainSim, LatencyModel};
use crate::transport::{dispatch, schedule, SimLoopback};

/// How closely a unit driven by the compiled commands follows the source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fidelity {
    pub frames: usize,
    /// Pearson correlation of the two 200 Hz frame envelopes.
    pub pearson: f64,
    pub source: Vec<f64>,
    pub actuator: Vec<f64>,
}

/// Compiles `waveform` onto a single unit, plays it through the simulator
/// and compares the actuator's acceleration envelope, shifted back by the
/// activation delay, with the envelope of the source.
pub fn envelope_fidelity(waveform: &Waveform, latency: &LatencyModel) -> Result<Fidelity, ReportError> {
    let duration_ms = waveform
        .duration_ms()
        .ok_or_else(|| PatternError::validation("waveform", "fidelity needs a bounded waveform"))?
        .ceil() as u64;
    let mut doc = PatternDocument::new("fidelity");
    create_chain_grid(&mut doc, 1, (0.0, 0.0), 1.0)?;
    doc.waveform_library.insert("w".into(), waveform.clone());
    doc.assign(UnitKey { chain: 0, address: 0 }, "w", 0, duration_ms);

    let plan = schedule(&compile(&doc)?);
    let mut endpoint = SimLoopback::new(ChainSim::new(doc.topology(), *latency)?);
    dispatch(&plan.packets, &mut endpoint)?;
    let mut sim = endpoint.into_sim();
    sim.run_to_idle();

    let source = sample(waveform, COMPILE_RATE_HZ, duration_ms as f64)?;
    let n = source.frame_count();
    let delay = latency.activation_delay_us(0);
    let trace = sim.acceleration_trace(0, 0, delay, delay + duration_ms * 1000, COMPILE_RATE_HZ)?;
    let driven = SampledWaveform::new(trace, COMPILE_RATE_HZ).map_err(PatternError::from)?;

    let source_env = frame_envelope(&source, &envelope(&source), n);
    let actuator_env = frame_envelope(&driven, &envelope(&driven), n);
    Ok(Fidelity {
        frames: n,
        pearson: pearson(&source_env, &actuator_env),
        source: source_env,
        actuator: actuator_env,
    })
}

/// Pearson correlation; zero when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn unbounded_waveform_is_rejected() {
        assert!(envelope_fidelity(&Waveform::sine(200.0), &LatencyModel::default()).is_err());
    }

    #[test]
    fn corpus_tracks_source() {
        for (name, text) in crate::corpus::WAVEFORMS {
            let w: Waveform = serde_json::from_str(text).unwrap();
            let f = envelope_fidelity(&w, &LatencyModel::default()).unwrap();
            eprintln!("{name}: {:.4}", f.pearson);
            assert!(f.pearson >= 0.9, "{name}: {}", f.pearson);
        }
    }
}
