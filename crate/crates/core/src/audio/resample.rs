use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

pub const MIN_STRETCH: f64 = 0.5;
pub const MAX_STRETCH: f64 = 2.0;

/// Output length of a stretch by `factor`: `round(len * factor)`.
pub fn resampled_len(len: usize, factor: f64) -> usize {
    (len as f64 * factor).round() as usize
}

/// Stretches (factor > 1) or shrinks (factor < 1) a clip by truncating or
/// zero-padding its spectrum. The sample rate is kept, so the clip plays for
/// `factor` times as long and its pitch drops by `1 / factor`.
///
/// One DFT covers the whole clip. The Nyquist bin is folded or split when the
/// shorter length is even, and the result is rescaled so DC is preserved.
pub fn fourier_resample(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(MIN_STRETCH..=MAX_STRETCH).contains(&factor) {
        return Err(Error::invalid(
            "factor",
            format!("{factor} outside [{MIN_STRETCH}, {MAX_STRETCH}]"),
        ));
    }
    if w.is_empty() {
        return Err(Error::Empty("fourier_resample of an empty waveform"));
    }
    let n = w.len();
    let m = resampled_len(n, factor).max(1);
    if m == n {
        return Ok(w.clone());
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex<f64>> = w
        .samples()
        .iter()
        .map(|&s| Complex::new(s as f64, 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let mut out = vec![Complex::new(0.0, 0.0); m];
    let n_min = n.min(m);
    let positive = n_min / 2 + 1;
    out[..positive].copy_from_slice(&spectrum[..positive]);
    let negative = n_min - positive;
    if negative > 0 {
        out[m - negative..].copy_from_slice(&spectrum[n - negative..]);
    }
    if n_min % 2 == 0 {
        let nyq = n_min / 2;
        if m < n {
            // fold the discarded conjugate half of the Nyquist pair back in
            out[nyq] += spectrum[n - nyq];
        } else {
            let half = out[nyq] * 0.5;
            out[nyq] = half;
            out[m - nyq] = half;
        }
    }

    planner.plan_fft_inverse(m).process(&mut out);
    // unnormalised inverse: divide by m, then scale by m / n
    let samples = out.iter().map(|c| (c.re / n as f64) as f32).collect();
    Waveform::new(samples, w.sample_rate_hz())
}
