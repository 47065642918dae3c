use super::Waveform;
use crate::error::{Error, Result};

/// Waveforms whose RMS falls below this are treated as digital silence.
pub const SILENCE_RMS: f64 = 1e-8;

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Root mean square, accumulated in f64.
pub fn rms(w: &Waveform) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::Empty("rms of an empty waveform"));
    }
    let sum: f64 = w.samples().iter().map(|&s| (s as f64) * (s as f64)).sum();
    Ok((sum / w.len() as f64).sqrt())
}

pub fn apply_gain(w: &Waveform, gain_db: f64) -> Result<Waveform> {
    if !gain_db.is_finite() {
        return Err(Error::invalid("gain_db", "must be finite"));
    }
    let g = db_to_amplitude(gain_db);
    Waveform::new(
        w.samples().iter().map(|&s| (s as f64 * g) as f32).collect(),
        w.sample_rate_hz(),
    )
}

/// The two level-adjusted parts of a mix, before summation.
#[derive(Debug, Clone)]
pub struct MixComponents {
    pub signal: Waveform,
    pub noise: Waveform,
    /// Factor applied to the raw signal (level match times SNR gain).
    pub signal_gain: f64,
    /// Factor applied to the raw noise.
    pub noise_gain: f64,
}

impl MixComponents {
    pub fn sum(&self) -> Waveform {
        let samples = self
            .signal
            .samples()
            .iter()
            .zip(self.noise.samples())
            .map(|(a, b)| a + b)
            .collect();
        Waveform::from_trusted(samples, self.signal.sample_rate_hz())
    }
}

/// Level-matches `signal` and `noise` by boosting the quieter one to the
/// louder one's RMS, then scales the signal to sit `snr_db` above the noise.
pub fn mix_components(signal: &Waveform, noise: &Waveform, snr_db: f64) -> Result<MixComponents> {
    if signal.len() != noise.len() {
        return Err(Error::Shape(format!(
            "signal has {} samples, noise has {}",
            signal.len(),
            noise.len()
        )));
    }
    if signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::invalid("noise", "sample rate differs from signal"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", "must be finite"));
    }
    let rs = rms(signal)?;
    let rn = rms(noise)?;
    if rs < SILENCE_RMS {
        return Err(Error::Silence("signal".into()));
    }
    if rn < SILENCE_RMS {
        return Err(Error::Silence("noise".into()));
    }

    let (mut signal_gain, noise_gain) = if rs < rn {
        (rn / rs, 1.0)
    } else if rn < rs {
        (1.0, rs / rn)
    } else {
        (1.0, 1.0)
    };
    signal_gain *= db_to_amplitude(snr_db);

    let scale = |w: &Waveform, g: f64| -> Result<Waveform> {
        if g == 1.0 {
            return Ok(w.clone());
        }
        Waveform::new(
            w.samples().iter().map(|&s| (s as f64 * g) as f32).collect(),
            w.sample_rate_hz(),
        )
    };
    Ok(MixComponents {
        signal: scale(signal, signal_gain)?,
        noise: scale(noise, noise_gain)?,
        signal_gain,
        noise_gain,
    })
}

/// Mixes speech (`signal`) into an environment recording (`noise`) at the
/// requested SNR. The output is not clipped.
pub fn mix_at_snr(signal: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    Ok(mix_components(signal, noise, snr_db)?.sum())
}
