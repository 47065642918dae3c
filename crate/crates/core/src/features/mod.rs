//! Log-mel frontend: 960 ms windows at a 480 ms hop, a 25 ms / 10 ms STFT,
//! a 64-band mel projection and log compression into 96 x 64 patches.

mod mel;
mod patch;

pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use patch::{read_patch, write_patch, LogMelPatch};

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub window_ms: u32,
    pub hop_ms: u32,
    pub stft_window_samples: usize,
    pub stft_hop_samples: usize,
    pub fft_size: usize,
    pub mel_bands: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub log_offset: f64,
    pub patch_frames: usize,
    /// Zeros appended to each window before STFT framing.
    pub stft_pad_samples: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            window_ms: 960,
            hop_ms: 480,
            stft_window_samples: 400,
            stft_hop_samples: 160,
            fft_size: 512,
            mel_bands: 64,
            mel_low_hz: 125.0,
            mel_high_hz: 7500.0,
            log_offset: 0.001,
            patch_frames: 96,
            stft_pad_samples: 320,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate_hz as u64 * self.window_ms as u64 / 1000) as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate_hz as u64 * self.hop_ms as u64 / 1000) as usize
    }

    /// STFT frames available in one padded window.
    pub fn available_frames(&self) -> usize {
        let padded = self.window_samples() + self.stft_pad_samples;
        if padded < self.stft_window_samples {
            return 0;
        }
        (padded - self.stft_window_samples) / self.stft_hop_samples + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_samples() == 0 || self.window_samples() == 0 || self.stft_hop_samples == 0 {
            return Err(Error::invalid("frontend", "window and hop lengths must be positive"));
        }
        if self.stft_window_samples > self.fft_size {
            return Err(Error::invalid("fft_size", "shorter than the STFT window"));
        }
        if self.available_frames() < self.patch_frames {
            return Err(Error::invalid(
                "patch_frames",
                format!(
                    "{} frames requested but the padded window yields {}",
                    self.patch_frames,
                    self.available_frames()
                ),
            ));
        }
        if !(self.mel_low_hz < self.mel_high_hz && self.mel_high_hz < self.sample_rate_hz as f64 / 2.0) {
            return Err(Error::invalid("mel_high_hz", "need mel_low < mel_high < sample_rate / 2"));
        }
        if !(self.log_offset > 0.0) {
            return Err(Error::invalid("log_offset", "must be positive"));
        }
        Ok(())
    }
}

/// Number of windows for a clip of `len` samples:
/// `max(1, ceil((len - window + hop) / hop))`.
pub fn window_count(len: usize, window: usize, hop: usize) -> usize {
    let num = len as i64 - window as i64 + hop as i64;
    if num <= 0 {
        return 1;
    }
    ((num as usize).div_ceil(hop)).max(1)
}

/// Cuts a clip into overlapping fixed-length windows; the tail is zero padded.
pub fn frame_windows(w: &Waveform, cfg: &FrontendConfig) -> Result<Vec<Vec<f32>>> {
    if w.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::invalid(
            "waveform",
            format!(
                "sampled at {} Hz, frontend expects {} Hz",
                w.sample_rate_hz(),
                cfg.sample_rate_hz
            ),
        ));
    }
    let (win, hop) = (cfg.window_samples(), cfg.hop_samples());
    let samples = w.samples();
    Ok((0..window_count(samples.len(), win, hop))
        .map(|i| {
            let start = (i * hop).min(samples.len());
            let end = (start + win).min(samples.len());
            let mut out = Vec::with_capacity(win);
            out.extend_from_slice(&samples[start..end]);
            out.resize(win, 0.0);
            out
        })
        .collect())
}

/// Precomputed STFT/mel state; cheap to share between threads.
#[derive(Clone)]
pub struct Frontend {
    cfg: FrontendConfig,
    filterbank: MelFilterbank,
    hann: Vec<f32>,
    fft: Arc<dyn Fft<f32>>,
}

impl std::fmt::Debug for Frontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frontend").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let filterbank = MelFilterbank::new(
            cfg.sample_rate_hz,
            cfg.fft_size,
            cfg.mel_bands,
            cfg.mel_low_hz,
            cfg.mel_high_hz,
        )?;
        let n = cfg.stft_window_samples;
        // periodic Hann
        let hann = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32)
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            filterbank,
            hann,
            fft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel patch of exactly one window.
    pub fn log_mel(&self, window: &[f32], start_s: f64) -> Result<LogMelPatch> {
        let cfg = &self.cfg;
        if window.len() != cfg.window_samples() {
            return Err(Error::Shape(format!(
                "window has {} samples, expected {}",
                window.len(),
                cfg.window_samples()
            )));
        }
        let (frames, bands, bins) = (cfg.patch_frames, cfg.mel_bands, cfg.fft_size / 2 + 1);
        let mut values = vec![0.0f32; frames * bands];
        let mut buf = vec![Complex::new(0.0f32, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0f32; bins];
        let offset = cfg.log_offset as f32;
        for (f, row) in values.chunks_exact_mut(bands).enumerate() {
            let start = f * cfg.stft_hop_samples;
            for (i, slot) in buf.iter_mut().enumerate() {
                let s = if i < self.hann.len() {
                    window.get(start + i).copied().unwrap_or(0.0) * self.hann[i]
                } else {
                    0.0
                };
                *slot = Complex::new(s, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf[..bins]) {
                *m = c.norm();
            }
            self.filterbank.apply(&mag, row);
            for v in row.iter_mut() {
                *v = (*v + offset).ln();
            }
        }
        Ok(LogMelPatch::new(values, frames, bands, start_s))
    }

    /// One patch per window of the clip.
    pub fn patches(&self, w: &Waveform) -> Result<Vec<LogMelPatch>> {
        let hop_s = self.cfg.hop_samples() as f64 / self.cfg.sample_rate_hz as f64;
        frame_windows(w, &self.cfg)?
            .iter()
            .enumerate()
            .map(|(i, win)| self.log_mel(win, i as f64 * hop_s))
            .collect()
    }
}

/// Convenience wrapper that builds a frontend for a single window.
pub fn log_mel_spectrogram(window: &[f32], cfg: &FrontendConfig) -> Result<LogMelPatch> {
    Frontend::new(cfg.clone())?.log_mel(window, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frontend() -> Frontend {
        Frontend::new(FrontendConfig::default()).unwrap()
    }

    fn sine(freq: f64, amp: f64, len: usize) -> Vec<f32> {
        (0..len)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn window_counts() {
        let cfg = FrontendConfig::default();
        assert_eq!((cfg.window_samples(), cfg.hop_samples()), (15_360, 7_680));
        assert_eq!(cfg.available_frames(), 96);
        let w = |n| Waveform::new(vec![0.1; n], 16_000).unwrap();
        assert_eq!(frame_windows(&w(160_000), &cfg).unwrap().len(), 20);
        let exact = frame_windows(&w(15_360), &cfg).unwrap();
        assert_eq!(exact.len(), 1);
        assert!(exact[0].iter().all(|&s| s == 0.1));
        let one_s = frame_windows(&w(16_000), &cfg).unwrap();
        assert_eq!(one_s.len(), 2);
        let padded = one_s[1].iter().rev().take_while(|&&s| s == 0.0).count();
        assert_eq!(padded, 7_040);
        assert_eq!(frame_windows(&w(10), &cfg).unwrap().len(), 1);
        assert_eq!(frame_windows(&w(0), &cfg).unwrap().len(), 1);
        assert!(frame_windows(&Waveform::new(vec![0.0; 10], 8_000).unwrap(), &cfg).is_err());
    }

    #[test]
    fn window_count_matches_formula() {
        for len in (0..400_000).step_by(997) {
            let expected = if len + 7_680 <= 15_360 {
                1
            } else {
                ((len as f64 - 15_360.0 + 7_680.0) / 7_680.0).ceil() as usize
            };
            assert_eq!(window_count(len, 15_360, 7_680), expected.max(1), "len {len}");
        }
    }

    #[test]
    fn silence_hits_log_floor() {
        let p = frontend().log_mel(&vec![0.0; 15_360], 0.0).unwrap();
        assert_eq!((p.frames(), p.bands()), (96, 64));
        for &v in p.values() {
            assert!((v as f64 - 0.001f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_window_length() {
        assert!(frontend().log_mel(&vec![0.0; 15_000], 0.0).is_err());
    }

    #[test]
    fn tone_lands_in_nearest_band() {
        let fe = frontend();
        let p = fe.log_mel(&sine(1000.0, 1.0, 15_360), 0.0).unwrap();
        let want = fe.filterbank().nearest_band(1000.0);
        // the last two frames run into the zero padding and smear
        for f in 0..94 {
            let row = p.frame(f);
            let arg = (0..64).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, want, "frame {f}");
        }
    }

    #[test]
    fn scaling_by_ten_adds_ln_ten() {
        let fe = frontend();
        let mut noise = sine(440.0, 0.3, 15_360);
        for (i, s) in noise.iter_mut().enumerate() {
            *s += 0.05 * (((i * 7919) % 1000) as f32 / 500.0 - 1.0);
        }
        let loud: Vec<f32> = noise.iter().map(|s| s * 10.0).collect();
        let a = fe.log_mel(&noise, 0.0).unwrap();
        let b = fe.log_mel(&loud, 0.0).unwrap();
        let ln10 = 10f32.ln();
        let mut strong = 0;
        for (x, y) in a.values().iter().zip(b.values()) {
            let d = y - x;
            assert!(d >= 0.0 && d <= ln10 + 1e-4);
            if x.exp() - 0.001 > 1.0 {
                assert!((d - ln10).abs() < 1e-3);
                strong += 1;
            }
        }
        assert!(strong > 100);
    }

    #[test]
    fn shift_covariance() {
        let fe = frontend();
        let audio: Vec<f32> = (0..16_000).map(|i| ((i * 31337) % 2001) as f32 / 1000.0 - 1.0).collect();
        let base = fe.log_mel(&audio[..15_360], 0.0).unwrap();
        for k in 1..=3 {
            let shifted = fe.log_mel(&audio[160 * k..160 * k + 15_360], 0.0).unwrap();
            // frames that read past the window into the zero pad differ
            for f in k..=93 {
                for (x, y) in base.frame(f).iter().zip(shifted.frame(f - k)) {
                    assert!((x - y).abs() < 1e-5, "k={k} frame {f}");
                }
            }
        }
    }

    #[test]
    fn deterministic_and_monotone() {
        let fe = frontend();
        let w = sine(300.0, 0.2, 15_360);
        let a = fe.log_mel(&w, 0.0).unwrap();
        assert_eq!(a, fe.log_mel(&w, 0.0).unwrap());
        let louder: Vec<f32> = w.iter().map(|s| s * 1.7).collect();
        let b = fe.log_mel(&louder, 0.0).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| y >= x));
    }
}
