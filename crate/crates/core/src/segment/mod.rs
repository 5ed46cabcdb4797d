//! Audio-rate waveform to 200 Hz command-frame segmentation.
//!
//! The carrier (content above [`SEGMENT_THRESHOLD_HZ`]) is tracked with a
//! short-time Fourier transform and snapped to the nearest frequency level;
//! the slow envelope comes from the analytic signal and is mapped onto the
//! sixteen intensity levels.

mod envelope;
mod stft;

use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{FREQUENCIES_HZ, MAX_FREQUENCY_INDEX, MAX_INTENSITY};

pub use envelope::envelope;
pub use stft::{dominant_frequency, spectral_peaks, StftConfig};

pub const FRAME_RATE_HZ: f64 = 200.0;
pub const FRAME_PERIOD_MS: u64 = 5;
/// Content above this is rendered through frequency levels, below it through intensity.
pub const SEGMENT_THRESHOLD_HZ: f64 = 100.0;
/// Envelope values under this fraction of the global maximum are silent.
pub const SILENCE_FLOOR: f64 = 0.02;
pub const STFT_WINDOW: usize = 1024;
/// Spectral peaks weaker than this fraction of the loudest frame give no
/// frequency reading; near envelope nulls the sidebands split the peak.
pub const CARRIER_CONFIDENCE: f64 = 0.25;
/// Frequency index used when a clip never shows carrier content (170 Hz).
pub const DEFAULT_FREQUENCY_INDEX: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("input has no samples")]
    Empty,
    #[error("{0} Hz is at or below the 100 Hz segmentation threshold")]
    BelowThreshold(f64),
    #[error("envelope maximum must be positive, got {0}")]
    Normalization(f64),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A mono signal at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl SampledWaveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, SegmentError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SegmentError::InvalidWaveform(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SegmentError::InvalidWaveform(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Samples `f(t)` (t in seconds) for `duration_s` at `rate_hz`.
    pub fn from_fn(rate_hz: f64, duration_s: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (rate_hz * duration_s).round() as usize;
        Self {
            samples: (0..n).map(|i| f(i as f64 / rate_hz)).collect(),
            sample_rate_hz: rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// `ceil(duration * 200)`.
    pub fn frame_count(&self) -> usize {
        let exact = self.samples.len() as f64 * FRAME_RATE_HZ / self.sample_rate_hz;
        (exact - 1e-9).ceil().max(0.0) as usize
    }

    /// Sample index closest to the start of 5 ms frame `frame`.
    pub fn frame_sample(&self, frame: usize) -> usize {
        let idx = (frame as f64 * self.sample_rate_hz / FRAME_RATE_HZ).round() as usize;
        idx.min(self.samples.len().saturating_sub(1))
    }

    /// Sample CSV: a `rate=<hz>` header, then one sample per line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("rate={}\n", self.sample_rate_hz);
        for s in &self.samples {
            writeln!(out, "{s}").expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SegmentError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(SegmentError::Parse {
            line: 1,
            message: "missing `rate=<hz>` header".into(),
        })?;
        let rate = header
            .strip_prefix("rate=")
            .ok_or_else(|| SegmentError::Parse {
                line,
                message: format!("expected `rate=<hz>` header, found `{header}`"),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| SegmentError::Parse {
                line,
                message: format!("bad sample rate: {e}"),
            })?;
        let samples = lines
            .map(|(line, l)| {
                l.parse::<f64>().map_err(|_| SegmentError::Parse {
                    line,
                    message: format!("`{l}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if samples.is_empty() {
            return Err(SegmentError::Parse {
                line: line + 1,
                message: "no samples after header".into(),
            });
        }
        Self::new(samples, rate).map_err(|e| SegmentError::Parse {
            line,
            message: e.to_string(),
        })
    }
}

/// One 5 ms command frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentFrame {
    pub active: bool,
    pub intensity: u8,
    pub frequency_index: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedStream {
    pub frame_rate_hz: f64,
    pub frames: Vec<SegmentFrame>,
}

impl SegmentedStream {
    /// `frame_idx active intensity freq_idx`, one frame per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.frames.iter().enumerate() {
            writeln!(
                out,
                "{i} {} {} {}",
                u8::from(f.active),
                f.intensity,
                f.frequency_index
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Nearest frequency level in log-frequency, clamped to the table ends.
pub fn quantize_frequency(hz: f64) -> Result<u8, SegmentError> {
    if hz.is_nan() || hz <= SEGMENT_THRESHOLD_HZ {
        return Err(SegmentError::BelowThreshold(hz));
    }
    let target = hz.ln();
    let best = FREQUENCIES_HZ
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (a.ln() - target)
                .abs()
                .total_cmp(&(b.ln() - target).abs())
        })
        .map(|(i, _)| i as u8)
        .expect("non-empty table");
    Ok(best.min(MAX_FREQUENCY_INDEX))
}

/// Intensity level for an envelope value, or `None` for a silent frame.
///
/// Levels are `round(value / max * 15)` with halves rounded up.
pub fn quantize_intensity(value: f64, max: f64) -> Result<Option<u8>, SegmentError> {
    if !(max > 0.0) || !max.is_finite() {
        return Err(SegmentError::Normalization(max));
    }
    let ratio = (value / max).clamp(0.0, 1.0);
    if ratio < SILENCE_FLOOR {
        return Ok(None);
    }
    let level = (ratio * f64::from(MAX_INTENSITY) + 0.5).floor();
    Ok(Some((level as u8).min(MAX_INTENSITY)))
}

/// Converts an audio-rate waveform into a 200 Hz frame stream.
pub fn segment(w: &SampledWaveform) -> Result<SegmentedStream, SegmentError> {
    if w.is_empty() {
        return Err(SegmentError::Empty);
    }
    let n_frames = w.frame_count();
    let env = frame_envelope(w, &envelope(w), n_frames);
    let env_max = env.iter().copied().fold(0.0f64, f64::max);

    let mut frames = Vec::with_capacity(n_frames);
    let mut raw = Vec::with_capacity(n_frames);
    if env_max <= 0.0 {
        frames.resize(
            n_frames,
            SegmentFrame {
                active: false,
                intensity: 0,
                frequency_index: DEFAULT_FREQUENCY_INDEX,
            },
        );
        return Ok(SegmentedStream {
            frame_rate_hz: FRAME_RATE_HZ,
            frames,
        });
    }

    let config = StftConfig {
        window_len: STFT_WINDOW,
        hop_len: ((w.sample_rate_hz / FRAME_RATE_HZ).round() as usize).max(1),
        min_hz: SEGMENT_THRESHOLD_HZ,
        floor: CARRIER_CONFIDENCE,
    };
    let peaks = spectral_peaks(w, &config)?;
    for (j, &e) in env.iter().enumerate().take(n_frames) {
        let s = w.frame_sample(j);
        let level = quantize_intensity(e, env_max)?;
        // nearest STFT frame on the hop grid
        let stft_frame = ((s as f64 / config.hop_len as f64).round() as usize).min(peaks.len() - 1);
        let freq = match level {
            Some(_) => peaks[stft_frame].and_then(|hz| quantize_frequency(hz).ok()),
            None => None,
        };
        raw.push(freq);
        frames.push(SegmentFrame {
            active: level.is_some(),
            intensity: level.unwrap_or(0),
            frequency_index: DEFAULT_FREQUENCY_INDEX,
        });
    }

    for (frame, index) in frames.iter_mut().zip(stabilize(&raw)) {
        frame.frequency_index = index;
    }
    Ok(SegmentedStream {
        frame_rate_hz: FRAME_RATE_HZ,
        frames,
    })
}

/// Mean analytic-signal magnitude over a 5 ms window centred on each frame.
///
/// Averaging absorbs the narrow spikes the analytic signal shows at clip
/// edges, which would otherwise dominate the normalization maximum.
pub fn frame_envelope(w: &SampledWaveform, env: &[f64], n_frames: usize) -> Vec<f64> {
    let half = (w.sample_rate_hz / FRAME_RATE_HZ / 2.0).floor() as usize;
    (0..n_frames)
        .map(|j| {
            let c = w.frame_sample(j);
            let span = &env[c.saturating_sub(half)..(c + half + 1).min(env.len())];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Frequency-index track with single-frame flicker removed.
///
/// A new index is accepted only when it appears in two consecutive raw
/// frames. Frames without a reading hold the last accepted index; frames
/// before the first reading take the first accepted index.
pub fn stabilize(raw: &[Option<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len());
    let mut current: Option<u8> = None;
    for (i, r) in raw.iter().enumerate() {
        if let Some(r) = *r {
            match current {
                None => current = Some(r),
                Some(c) if c != r && raw.get(i + 1).copied().flatten() == Some(r) => {
                    current = Some(r)
                }
                _ => {}
            }
        }
        out.push(current);
    }
    let first = out.iter().flatten().next().copied().unwrap_or(DEFAULT_FREQUENCY_INDEX);
    out.into_iter().map(|c| c.unwrap_or(first)).collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;

    #[test]
    fn quantize_frequency_examples() {
        assert_eq!(quantize_frequency(170.0).unwrap(), 2);
        // |ln(150/145)| = 0.0339 < |ln(170/150)| = 0.1252
        assert_eq!(quantize_frequency(150.0).unwrap(), 1);
        assert_eq!(quantize_frequency(500.0).unwrap(), 7);
        assert_eq!(quantize_frequency(101.0).unwrap(), 0);
        assert!(matches!(quantize_frequency(100.0), Err(SegmentError::BelowThreshold(_))));
        for (i, &hz) in FREQUENCIES_HZ.iter().enumerate() {
            assert_eq!(quantize_frequency(hz).unwrap(), i as u8);
        }
    }

    #[test]
    fn quantize_intensity_examples() {
        assert_eq!(quantize_intensity(2.0, 2.0).unwrap(), Some(15));
        assert_eq!(quantize_intensity(0.0, 2.0).unwrap(), None);
        assert_eq!(quantize_intensity(1.0, 2.0).unwrap(), Some(8));
        assert_eq!(quantize_intensity(0.03, 1.0).unwrap(), Some(0));
        assert!(matches!(quantize_intensity(1.0, 0.0), Err(SegmentError::Normalization(_))));
    }

    #[test]
    fn stabilize_drops_single_frame_flicker() {
        let raw = [None, Some(3), Some(3), Some(4), Some(3), Some(5), Some(5), None, Some(5)];
        assert_eq!(stabilize(&raw), vec![3, 3, 3, 3, 3, 5, 5, 5, 5]);
        assert_eq!(stabilize(&[None, None]), vec![DEFAULT_FREQUENCY_INDEX; 2]);
    }

    #[test]
    fn silence_is_inactive() {
        let w = SampledWaveform::new(vec![0.0; 44_100], 44_100.0).unwrap();
        let s = segment(&w).unwrap();
        assert_eq!(s.frames.len(), 200);
        assert!(s.frames.iter().all(|f| !f.active));
    }

    #[test]
    fn constant_tone_is_full_scale() {
        let w = SampledWaveform::from_fn(44_100.0, 0.5, |t| (TAU * 170.0 * t).sin());
        let s = segment(&w).unwrap();
        assert_eq!(s.frames.len(), 100);
        for f in &s.frames {
            assert_eq!((f.active, f.intensity, f.frequency_index), (true, 15, 2));
        }
    }

    #[test]
    fn frame_count_rounds_up() {
        let w = SampledWaveform::new(vec![0.1; 221], 44_100.0).unwrap();
        assert_eq!(w.frame_count(), 2);
        let w = SampledWaveform::new(vec![0.1; 88_200], 44_100.0).unwrap();
        assert_eq!(w.frame_count(), 400);
        assert_eq!(segment(&SampledWaveform::new(vec![], 8000.0).unwrap()), Err(SegmentError::Empty));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let w = SampledWaveform::new(vec![0.25, -1.0, 1e-7, 0.1 + 0.2], 44_100.0).unwrap();
        assert_eq!(SampledWaveform::from_csv(&w.to_csv()).unwrap(), w);
        let full = SampledWaveform::new(vec![0.0; 44_100], 44_100.0).unwrap();
        assert_eq!(SampledWaveform::from_csv(&full.to_csv()).unwrap().duration_s(), 1.0);
        assert!(matches!(
            SampledWaveform::from_csv("rate=8000\n"),
            Err(SegmentError::Parse { .. })
        ));
        assert!(matches!(SampledWaveform::from_csv("0.1\n0.2\n"), Err(SegmentError::Parse { line: 1, .. })));
        assert_eq!(
            SampledWaveform::from_csv("rate=8000\n0.1\nabc\n"),
            Err(SegmentError::Parse {
                line: 3,
                message: "`abc` is not a number".into()
            })
        );
        assert!(SampledWaveform::from_csv("").is_err());
    }

    #[test]
    fn stream_text_format() {
        let s = SegmentedStream {
            frame_rate_hz: FRAME_RATE_HZ,
            frames: vec![
                SegmentFrame {
                    active: false,
                    intensity: 0,
                    frequency_index: 2,
                },
                SegmentFrame {
                    active: true,
                    intensity: 9,
                    frequency_index: 3,
                },
            ],
        };
        assert_eq!(s.to_text(), "0 0 0 2\n1 1 9 3\n");
    }
}
