use crate::error::{Error, Result};

/// HTK mel scale in natural-log form.
pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters on the one-sided spectrum, stored bin-major
/// (`weights[bin * bands + band]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    bins: usize,
    bands: usize,
    weights: Vec<f32>,
    /// `bands + 2` edge frequencies; band `j` peaks at `edges_hz[j + 1]`.
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate_hz: u32, fft_size: usize, bands: usize, low_hz: f64, high_hz: f64) -> Result<Self> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if bands == 0 || fft_size < 2 {
            return Err(Error::invalid("mel_bands", "need at least one band and a non-trivial FFT"));
        }
        if !(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist) {
            return Err(Error::invalid(
                "mel_edges",
                format!("need 0 <= {low_hz} < {high_hz} <= {nyquist}"),
            ));
        }
        let bins = fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let step = (hi - lo) / (bands + 1) as f64;
        let edges_mel: Vec<f64> = (0..bands + 2).map(|i| lo + step * i as f64).collect();

        let mut weights = vec![0.0f32; bins * bands];
        for k in 1..bins {
            let m = hz_to_mel(k as f64 * sample_rate_hz as f64 / fft_size as f64);
            for j in 0..bands {
                let (l, c, u) = (edges_mel[j], edges_mel[j + 1], edges_mel[j + 2]);
                let w = ((m - l) / (c - l)).min((u - m) / (u - c));
                if w > 0.0 {
                    weights[k * bands + j] = w as f32;
                }
            }
        }
        for j in 0..bands {
            if (0..bins).all(|k| weights[k * bands + j] == 0.0) {
                return Err(Error::invalid(
                    "mel_bands",
                    format!("band {j} covers no FFT bin; use fewer bands or a larger FFT"),
                ));
            }
        }
        Ok(Self {
            bins,
            bands,
            weights,
            edges_hz: edges_mel.into_iter().map(mel_to_hz).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn weight(&self, bin: usize, band: usize) -> f32 {
        self.weights[bin * self.bands + band]
    }

    pub fn centre_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }

    /// Band whose centre frequency is nearest `hz`.
    pub fn nearest_band(&self, hz: f64) -> usize {
        (0..self.bands)
            .min_by(|&a, &b| {
                (self.centre_hz(a) - hz)
                    .abs()
                    .total_cmp(&(self.centre_hz(b) - hz).abs())
            })
            .unwrap_or(0)
    }

    /// Projects a one-sided spectrum onto the bands.
    pub fn apply(&self, spectrum: &[f32], out: &mut [f32]) {
        debug_assert_eq!(spectrum.len(), self.bins);
        debug_assert_eq!(out.len(), self.bands);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &s) in spectrum.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let row = &self.weights[k * self.bands..(k + 1) * self.bands];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += s * w;
            }
        }
    }
}
