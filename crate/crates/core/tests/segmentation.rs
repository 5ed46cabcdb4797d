use std::f64::consts::TAU;

use proptest::prelude::*;
use vibraforge::protocol::FREQUENCIES_HZ;
use vibraforge::segment::{quantize_frequency, quantize_intensity, segment, SampledWaveform};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn modulated_carrier() {
    let w = SampledWaveform::from_fn(44_100.0, 2.0, |t| (TAU * 200.0 * t).sin() * (TAU * 5.0 * t).sin());
    let s = segment(&w).unwrap();
    assert_eq!(s.frames.len(), 400);
    for (i, f) in s.frames.iter().enumerate() {
        if f.active {
            assert_eq!(f.frequency_index, 3, "frame {i}");
        }
    }
    let intensity: Vec<f64> = s
        .frames
        .iter()
        .map(|f| if f.active { f64::from(f.intensity) } else { 0.0 })
        .collect();
    let truth: Vec<f64> = (0..400).map(|i| (TAU * 5.0 * i as f64 / 200.0).sin().abs()).collect();
    let r = pearson(&intensity, &truth);
    assert!(r >= 0.95, "correlation {r}");
}

#[test]
fn low_frequency_only_content_keeps_default_carrier() {
    // 20 Hz content is all envelope; the carrier falls back to the default level
    let w = SampledWaveform::from_fn(8_000.0, 0.5, |t| (TAU * 20.0 * t).sin());
    let s = segment(&w).unwrap();
    assert_eq!(s.frames.len(), 100);
    let idx: Vec<u8> = s.frames.iter().map(|f| f.frequency_index).collect();
    assert!(idx.iter().all(|&i| i == 2), "{idx:?}");
}

#[test]
fn table_entries_are_fixed_points() {
    for (i, &hz) in FREQUENCIES_HZ.iter().enumerate() {
        assert_eq!(quantize_frequency(hz).unwrap() as usize, i);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scale_invariant(gain in 0.05f64..4.0, carrier in 0usize..8) {
        let hz = FREQUENCIES_HZ[carrier];
        let base = SampledWaveform::from_fn(22_050.0, 0.2, |t| (TAU * hz * t).sin() * (0.3 + 0.7 * (TAU * 7.0 * t).sin().abs()));
        let scaled = SampledWaveform::new(base.samples.iter().map(|s| s * gain).collect(), base.sample_rate_hz).unwrap();
        prop_assert_eq!(segment(&base).unwrap(), segment(&scaled).unwrap());
    }

    #[test]
    fn frame_count_is_ceiling(n in 1usize..5_000, rate in prop::sample::select(vec![8_000.0, 22_050.0, 44_100.0, 48_000.0])) {
        let w = SampledWaveform::new(vec![0.5; n], rate).unwrap();
        let expected = (n as f64 * 200.0 / rate).ceil() as usize;
        prop_assert_eq!(segment(&w).unwrap().frames.len(), expected);
    }

    #[test]
    fn frequency_quantization_idempotent(hz in 100.001f64..2_000.0) {
        let i = quantize_frequency(hz).unwrap();
        prop_assert_eq!(quantize_frequency(FREQUENCIES_HZ[i as usize]).unwrap(), i);
        // nearest in log distance
        let d = (hz.ln() - FREQUENCIES_HZ[i as usize].ln()).abs();
        for f in FREQUENCIES_HZ {
            prop_assert!(d <= (hz.ln() - f.ln()).abs() + 1e-12);
        }
    }

    #[test]
    fn intensity_quantization_idempotent(v in 0.0f64..1.0) {
        if let Some(level) = quantize_intensity(v, 1.0).unwrap() {
            let back = quantize_intensity(f64::from(level) / 15.0, 1.0).unwrap();
            prop_assert!(back == Some(level) || (level == 0 && back.is_none()));
            prop_assert!((f64::from(level) / 15.0 - v).abs() <= 0.5 / 15.0 + 1e-12);
        }
    }
}
