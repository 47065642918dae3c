//! Mono audio buffers, the PCM16 WAV codec and the level/mixing primitives
//! the dataset builder is made of.

mod dsp;
mod resample;
pub mod wav;

pub use dsp::{apply_gain, db_to_amplitude, mix_at_snr, mix_components, rms, MixComponents, SILENCE_RMS};
pub use resample::{fourier_resample, resampled_len, MAX_STRETCH, MIN_STRETCH};
pub use wav::{encode_wav, read_wav, read_wav_info, read_wav_range, write_wav, WavInfo, WriteStats};

use crate::error::{Error, Result};

/// Canonical sample rate of every clip in the pipeline.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// A single-channel buffer of finite `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample_rate_hz", "must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(
                "samples",
                format!("sample {i} is not finite"),
            ));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Wraps samples produced by arithmetic that cannot introduce non-finite
    /// values from finite inputs (scaling by finite gains, sums).
    pub(crate) fn from_trusted(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self::from_trusted(vec![0.0; len], sample_rate_hz.max(1))
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * factor).collect(),
            self.sample_rate_hz,
        )
    }

    /// Appends `other`, which must share the sample rate.
    pub fn concat(&self, other: &Waveform) -> Result<Self> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid("other", "sample rates differ"));
        }
        let mut samples = Vec::with_capacity(self.len() + other.len());
        samples.extend_from_slice(&self.samples);
        samples.extend_from_slice(&other.samples);
        Ok(Self::from_trusted(samples, self.sample_rate_hz))
    }

    /// Copy of `len` samples starting at `start`; out-of-range reads are an error.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.samples.len())
            .ok_or_else(|| Error::invalid("len", "slice runs past the end of the waveform"))?;
        Ok(Self::from_trusted(
            self.samples[start..end].to_vec(),
            self.sample_rate_hz,
        ))
    }
}
