use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::PatternError;
use crate::segment::SampledWaveform;

/// Composable waveform node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    Oscillator(Oscillator),
    Envelope(Envelope),
    /// Pointwise product; lasts as long as its shortest bounded child.
    Multiply { children: Vec<Waveform> },
    /// Children played one after another; every child must be bounded.
    Concat { children: Vec<Waveform> },
    /// Imported samples, linearly interpolated.
    Samples { rate_hz: f64, samples: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sine,
    Square,
    Triangle,
    Saw,
}

/// Oscillator frequency: a constant or `(t_ms, hz)` keyframes joined linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Constant(f64),
    Keyframes(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub shape: Shape,
    pub frequency_hz: Frequency,
    #[serde(default = "unit")]
    pub amplitude: f64,
    /// Initial phase in radians.
    #[serde(default)]
    pub phase: f64,
}

fn unit() -> f64 {
    1.0
}

/// Non-negative gain curve, zero outside `[0, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "envelope", rename_all = "snake_case")]
pub enum Envelope {
    Ramp {
        duration_ms: f64,
        #[serde(default)]
        from: f64,
        #[serde(default = "unit")]
        to: f64,
    },
    /// `cos^2` bump: zero at both ends, one at mid-duration.
    Cos2 { duration_ms: f64 },
    /// `(t_ms, value)` keyframes joined linearly.
    Keyframes { keyframes: Vec<(f64, f64)> },
}

impl Oscillator {
    pub fn new(shape: Shape, hz: f64) -> Self {
        Self {
            shape,
            frequency_hz: Frequency::Constant(hz),
            amplitude: 1.0,
            phase: 0.0,
        }
    }

    fn eval(&self, t_ms: f64) -> f64 {
        let theta = TAU * self.frequency_hz.cycles_at(t_ms) + self.phase;
        self.amplitude
            * match self.shape {
                Shape::Sine => theta.sin(),
                Shape::Square => {
                    if theta.sin() >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Shape::Triangle => theta.sin().asin() * 2.0 / PI,
                Shape::Saw => 2.0 * (theta / TAU).rem_euclid(1.0) - 1.0,
            }
    }
}

impl Frequency {
    fn max_hz(&self) -> f64 {
        match self {
            Self::Constant(hz) => *hz,
            Self::Keyframes(k) => k.iter().map(|k| k.1).fold(0.0, f64::max),
        }
    }

    /// Integrated phase in cycles from `t = 0`.
    fn cycles_at(&self, t_ms: f64) -> f64 {
        let keys = match self {
            Self::Constant(hz) => return hz * t_ms / 1000.0,
            Self::Keyframes(k) => k,
        };
        let Some(&(t0, f0)) = keys.first() else {
            return 0.0;
        };
        // held constant before the first and after the last keyframe
        let mut cycles = f0 * t0.min(t_ms) / 1000.0;
        let mut prev = (t0, f0);
        for &(t1, f1) in &keys[1..] {
            if t_ms <= prev.0 {
                return cycles;
            }
            let end = t_ms.min(t1);
            let f_end = prev.1 + (f1 - prev.1) * (end - prev.0) / (t1 - prev.0);
            cycles += 0.5 * (prev.1 + f_end) * (end - prev.0) / 1000.0;
            prev = (t1, f1);
        }
        if t_ms > prev.0 {
            cycles += prev.1 * (t_ms - prev.0) / 1000.0;
        }
        cycles
    }
}

impl Envelope {
    pub fn duration_ms(&self) -> f64 {
        match self {
            Self::Ramp { duration_ms, .. } | Self::Cos2 { duration_ms } => *duration_ms,
            Self::Keyframes { keyframes } => keyframes.last().map_or(0.0, |k| k.0),
        }
    }

    fn eval(&self, t_ms: f64) -> f64 {
        let d = self.duration_ms();
        if !(0.0..d).contains(&t_ms) {
            return 0.0;
        }
        match self {
            Self::Ramp { from, to, .. } => from + (to - from) * t_ms / d,
            Self::Cos2 { .. } => (PI * (t_ms / d - 0.5)).cos().powi(2),
            Self::Keyframes { keyframes } => interpolate(keyframes, t_ms),
        }
    }
}

fn interpolate(keys: &[(f64, f64)], t: f64) -> f64 {
    match keys.iter().position(|k| k.0 > t) {
        None => keys.last().map_or(0.0, |k| k.1),
        Some(0) => keys[0].1,
        Some(i) => {
            let (t0, v0) = keys[i - 1];
            let (t1, v1) = keys[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

impl Waveform {
    pub fn sine(hz: f64) -> Self {
        Self::Oscillator(Oscillator::new(Shape::Sine, hz))
    }

    pub fn product(children: Vec<Waveform>) -> Self {
        Self::Multiply { children }
    }

    /// Intrinsic length; `None` when the waveform is unbounded (a bare oscillator).
    pub fn duration_ms(&self) -> Option<f64> {
        match self {
            Self::Oscillator(_) => None,
            Self::Envelope(e) => Some(e.duration_ms()),
            Self::Multiply { children } => children
                .iter()
                .filter_map(Waveform::duration_ms)
                .reduce(f64::min),
            Self::Concat { children } => children.iter().map(Waveform::duration_ms).sum(),
            Self::Samples { rate_hz, samples } => Some(samples.len() as f64 * 1000.0 / rate_hz),
        }
    }

    /// Highest oscillator frequency anywhere in the tree.
    pub fn max_frequency_hz(&self) -> f64 {
        match self {
            Self::Oscillator(o) => o.frequency_hz.max_hz(),
            Self::Multiply { children } | Self::Concat { children } => children
                .iter()
                .map(Waveform::max_frequency_hz)
                .fold(0.0, f64::max),
            Self::Envelope(_) | Self::Samples { .. } => 0.0,
        }
    }

    /// Value at `t_ms`, unclipped.
    pub fn eval(&self, t_ms: f64) -> f64 {
        match self {
            Self::Oscillator(o) => o.eval(t_ms),
            Self::Envelope(e) => e.eval(t_ms),
            Self::Multiply { children } => children.iter().map(|c| c.eval(t_ms)).product(),
            Self::Concat { children } => {
                let mut offset = 0.0;
                for c in children {
                    let d = c.duration_ms().unwrap_or(0.0);
                    if t_ms < offset + d {
                        return if t_ms >= offset { c.eval(t_ms - offset) } else { 0.0 };
                    }
                    offset += d;
                }
                0.0
            }
            Self::Samples { rate_hz, samples } => {
                let pos = t_ms * rate_hz / 1000.0;
                if pos < 0.0 || samples.is_empty() {
                    return 0.0;
                }
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                match (samples.get(i), samples.get(i + 1)) {
                    (Some(a), Some(b)) => a + (b - a) * frac,
                    (Some(a), None) if frac == 0.0 => *a,
                    _ => 0.0,
                }
            }
        }
    }

    /// Checks structural invariants; `path` prefixes field diagnostics.
    pub fn validate_at(&self, path: &str) -> Result<(), PatternError> {
        match self {
            Self::Oscillator(o) => {
                check_unit(&format!("{path}.amplitude"), o.amplitude)?;
                if !o.phase.is_finite() {
                    return Err(PatternError::validation(format!("{path}.phase"), "must be finite"));
                }
                match &o.frequency_hz {
                    Frequency::Constant(hz) => check_positive(&format!("{path}.frequency_hz"), *hz),
                    Frequency::Keyframes(keys) => {
                        check_keyframes(&format!("{path}.frequency_hz"), keys)?;
                        for (i, k) in keys.iter().enumerate() {
                            check_positive(&format!("{path}.frequency_hz[{i}]"), k.1)?;
                        }
                        Ok(())
                    }
                }
            }
            Self::Envelope(e) => match e {
                Envelope::Ramp { duration_ms, from, to } => {
                    check_positive(&format!("{path}.duration_ms"), *duration_ms)?;
                    check_unit(&format!("{path}.from"), *from)?;
                    check_unit(&format!("{path}.to"), *to)
                }
                Envelope::Cos2 { duration_ms } => check_positive(&format!("{path}.duration_ms"), *duration_ms),
                Envelope::Keyframes { keyframes } => {
                    check_keyframes(&format!("{path}.keyframes"), keyframes)?;
                    for (i, k) in keyframes.iter().enumerate() {
                        check_unit(&format!("{path}.keyframes[{i}]"), k.1)?;
                    }
                    Ok(())
                }
            },
            Self::Multiply { children } | Self::Concat { children } => {
                if children.is_empty() {
                    return Err(PatternError::validation(format!("{path}.children"), "must not be empty"));
                }
                for (i, c) in children.iter().enumerate() {
                    let child = format!("{path}.children[{i}]");
                    c.validate_at(&child)?;
                    if matches!(self, Self::Concat { .. }) && c.duration_ms().is_none() {
                        return Err(PatternError::validation(child, "concatenated parts need a bounded duration"));
                    }
                }
                Ok(())
            }
            Self::Samples { rate_hz, samples } => {
                check_positive(&format!("{path}.rate_hz"), *rate_hz)?;
                if samples.is_empty() {
                    return Err(PatternError::validation(format!("{path}.samples"), "must not be empty"));
                }
                match samples.iter().position(|s| !s.is_finite()) {
                    Some(i) => Err(PatternError::validation(format!("{path}.samples[{i}]"), "must be finite")),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        self.validate_at("waveform")
    }
}

fn check_unit(field: &str, v: f64) -> Result<(), PatternError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(PatternError::validation(field, format!("{v} is outside [0, 1]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), PatternError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(PatternError::validation(field, format!("{v} must be positive")))
    }
}

fn check_keyframes(field: &str, keys: &[(f64, f64)]) -> Result<(), PatternError> {
    if keys.is_empty() {
        return Err(PatternError::validation(field, "needs at least one keyframe"));
    }
    if keys[0].0 < 0.0 || !keys[0].0.is_finite() {
        return Err(PatternError::validation(format!("{field}[0]"), "time must be non-negative"));
    }
    for (i, w) in keys.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
            return Err(PatternError::validation(
                format!("{field}[{}]", i + 1),
                format!("time {} does not increase past {}", w[1].0, w[0].0),
            ));
        }
    }
    Ok(())
}

/// Evaluates `w` at `rate_hz` over `[0, duration_ms)`, clipped to `[-1, 1]`.
pub fn sample(w: &Waveform, rate_hz: f64, duration_ms: f64) -> Result<SampledWaveform, PatternError> {
    w.validate()?;
    let max_hz = w.max_frequency_hz();
    if !(rate_hz.is_finite() && rate_hz > 0.0) || rate_hz < 2.0 * max_hz {
        return Err(PatternError::Aliasing { rate_hz, max_hz });
    }
    if !(duration_ms.is_finite() && duration_ms >= 0.0) {
        return Err(PatternError::validation("duration_ms", format!("{duration_ms} must be non-negative")));
    }
    let n = (rate_hz * duration_ms / 1000.0).round() as usize;
    let samples = (0..n)
        .map(|i| w.eval(i as f64 * 1000.0 / rate_hz).clamp(-1.0, 1.0))
        .collect();
    Ok(SampledWaveform {
        samples,
        sample_rate_hz: rate_hz,
    })
}
