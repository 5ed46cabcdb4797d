use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{SampledWaveform, SegmentError, SILENCE_FLOOR};

/// Short-time Fourier transform settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop_len: usize,
    /// Peaks are searched only above this frequency.
    pub min_hz: f64,
    /// Frames whose peak is below this fraction of the loudest frame's peak report `None`.
    pub floor: f64,
}

/// Per-frame frequency of maximum magnitude, with frames centred at
/// multiples of `hop_len`; `None` marks frames below the silence floor.
pub fn dominant_frequency(
    w: &SampledWaveform,
    window_len: usize,
    hop_len: usize,
) -> Result<Vec<Option<f64>>, SegmentError> {
    spectral_peaks(
        w,
        &StftConfig {
            window_len,
            hop_len,
            min_hz: 0.0,
            floor: SILENCE_FLOOR,
        },
    )
}

/// Hann-windowed, 8x zero-padded STFT with log-parabolic peak interpolation.
pub fn spectral_peaks(w: &SampledWaveform, config: &StftConfig) -> Result<Vec<Option<f64>>, SegmentError> {
    if w.is_empty() {
        return Err(SegmentError::Empty);
    }
    if config.window_len < 2 || config.hop_len == 0 {
        return Err(SegmentError::InvalidWaveform(
            "window must be at least 2 samples and hop at least 1".into(),
        ));
    }
    let n_fft = (config.window_len * 8).next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let window: Vec<f64> = (0..config.window_len)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / config.window_len as f64).cos())
        .collect();
    let bin_hz = w.sample_rate_hz / n_fft as f64;
    // skip DC even when min_hz is zero
    let first_bin = ((config.min_hz / bin_hz).floor() as usize + 1).min(n_fft / 2);
    let last_bin = n_fft / 2;

    let half = config.window_len / 2;
    let n_frames = w.len().div_ceil(config.hop_len);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut peaks = Vec::with_capacity(n_frames);
    for frame in 0..n_frames {
        let centre = frame * config.hop_len;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, win) in window.iter().enumerate() {
            let s = (centre + i).checked_sub(half).and_then(|s| w.samples.get(s));
            if let Some(&s) = s {
                buf[i] = Complex::new(s * win, 0.0);
            }
        }
        fft.process(&mut buf);
        let (bin, mag) = (first_bin..=last_bin)
            .map(|k| (k, buf[k].norm()))
            .fold((first_bin, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let full_peak = buf[1..=last_bin].iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        // a peak on the band edge is the skirt of content under the floor
        let on_skirt = bin > 1 && buf[bin - 1].norm() >= mag;
        let mag = if !on_skirt && mag >= SILENCE_FLOOR * full_peak { mag } else { 0.0 };
        let offset = if bin > first_bin && bin < last_bin && mag > 0.0 {
            let ln = |k: usize| (buf[k].norm() + f64::MIN_POSITIVE).ln();
            let (a, b, c) = (ln(bin - 1), ln(bin), ln(bin + 1));
            let denom = a - 2.0 * b + c;
            if denom.abs() > 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
        peaks.push((mag, (bin as f64 + offset) * bin_hz));
    }

    let loudest = peaks.iter().map(|p| p.0).fold(0.0f64, f64::max);
    Ok(peaks
        .into_iter()
        .map(|(mag, hz)| (loudest > 0.0 && mag >= config.floor * loudest).then_some(hz))
        .collect())
}
