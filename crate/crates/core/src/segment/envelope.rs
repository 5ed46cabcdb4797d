use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SampledWaveform;

/// Magnitude of the analytic signal, computed with a full-length FFT.
pub fn envelope(w: &SampledWaveform) -> Vec<f64> {
    let n = w.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // keep DC (and Nyquist), double positive frequencies, zero negative ones
    let positive_end = n.div_ceil(2);
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if k < positive_end {
            2.0
        } else {
            0.0
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}
