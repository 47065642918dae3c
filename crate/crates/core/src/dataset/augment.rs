use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{apply_gain, fourier_resample, Waveform};
use crate::error::{Error, Result};
use crate::seed::{hash_str, rng_for, stream};

/// On-the-fly training augmentation: random gain, additive uniform noise and
/// a Fourier time stretch, each applied independently with `probability_each`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    pub probability_each: f64,
    pub gain_range_db: [f64; 2],
    pub noise_range: [f64; 2],
    pub stretch_range: [f64; 2],
    pub rng_seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            probability_each: 0.5,
            gain_range_db: [-6.0, 6.0],
            noise_range: [-0.003, 0.003],
            stretch_range: [0.9, 1.1],
            rng_seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        Self {
            probability_each: 0.0,
            ..Self::default()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.probability_each > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability_each) {
            return Err(Error::invalid("probability_each", "must lie in [0, 1]"));
        }
        for (name, [lo, hi]) in [
            ("gain_range_db", self.gain_range_db),
            ("noise_range", self.noise_range),
            ("stretch_range", self.stretch_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid("augmentation", format!("{name} [{lo}, {hi}] is not a range")));
            }
        }
        if self.stretch_range[0] < crate::audio::MIN_STRETCH || self.stretch_range[1] > crate::audio::MAX_STRETCH {
            return Err(Error::invalid("stretch_range", "outside the resampler's supported range"));
        }
        Ok(())
    }
}

/// Which procedures fired for one call, and with what parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AugmentationTrace {
    pub gain_db: Option<f64>,
    pub noise: bool,
    pub stretch: Option<f64>,
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Augments one clip. The random stream is keyed on
/// `(cfg.rng_seed, clip_id, epoch)`, so the result is independent of the
/// order in which clips are processed.
pub fn augment_clip(w: &Waveform, cfg: &AugmentationConfig, clip_id: &str, epoch: u32) -> Result<(Waveform, AugmentationTrace)> {
    let mut rng = rng_for(cfg.rng_seed, &[stream::AUGMENT, hash_str(clip_id), epoch as u64]);
    let p = cfg.probability_each;
    // gain -> noise -> stretch
    let fire = [rng.random_bool(p), rng.random_bool(p), rng.random_bool(p)];
    let mut trace = AugmentationTrace::default();
    let mut out = w.clone();
    if fire[0] {
        let g = draw(&mut rng, cfg.gain_range_db);
        out = apply_gain(&out, g)?;
        trace.gain_db = Some(g);
    }
    if fire[1] {
        let [lo, hi] = cfg.noise_range;
        let samples = out
            .samples()
            .iter()
            .map(|&s| s + draw(&mut rng, [lo, hi]) as f32)
            .collect();
        out = Waveform::new(samples, out.sample_rate_hz())?;
        trace.noise = true;
    }
    if fire[2] {
        let f = draw(&mut rng, cfg.stretch_range);
        out = fourier_resample(&out, f)?;
        trace.stretch = Some(f);
    }
    Ok((out, trace))
}
