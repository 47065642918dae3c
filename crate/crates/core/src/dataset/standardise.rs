use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Streaming accumulator for the RMS pooled over every sample of a corpus.
#[derive(Debug, Clone, Copy, Default)]
pub struct PooledRms {
    sum_sq: f64,
    count: u64,
}

impl PooledRms {
    pub fn push(&mut self, w: &Waveform) {
        self.sum_sq += w
            .samples()
            .iter()
            .map(|&s| (s as f64) * (s as f64))
            .sum::<f64>();
        self.count += w.len() as u64;
    }

    pub fn merge(&mut self, other: &PooledRms) {
        self.sum_sq += other.sum_sq;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn value(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Empty("corpus RMS over zero samples"));
        }
        Ok((self.sum_sq / self.count as f64).sqrt())
    }
}

/// sqrt(total energy / total sample count) over all clips.
pub fn compute_corpus_rms(clips: &[Waveform]) -> Result<f64> {
    let mut acc = PooledRms::default();
    for c in clips {
        acc.push(c);
    }
    acc.value()
}

pub fn standardise_gain(own_rms: f64, reference_rms: f64) -> Result<f64> {
    if !(own_rms > 0.0) || !own_rms.is_finite() {
        return Err(Error::invalid("own_rms", format!("{own_rms} is not positive")));
    }
    if !(reference_rms > 0.0) || !reference_rms.is_finite() {
        return Err(Error::invalid(
            "reference_rms",
            format!("{reference_rms} is not positive"),
        ));
    }
    Ok(reference_rms / own_rms)
}

pub fn scale_clip(w: &Waveform, gain: f64) -> Result<Waveform> {
    if gain == 1.0 {
        return Ok(w.clone());
    }
    Waveform::new(
        w.samples().iter().map(|&s| (s as f64 * gain) as f32).collect(),
        w.sample_rate_hz(),
    )
}

/// Scales every clip by `reference_rms / own_rms`.
pub fn standardise_corpus(clips: &[Waveform], own_rms: f64, reference_rms: f64) -> Result<Vec<Waveform>> {
    let gain = standardise_gain(own_rms, reference_rms)?;
    clips.iter().map(|c| scale_clip(c, gain)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_corpus(seed: u64, count: usize) -> Vec<Waveform> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let n = rng.random_range(100..2000);
                let amp = rng.random_range(0.01f32..0.9);
                Waveform::new((0..n).map(|_| rng.random_range(-amp..amp)).collect(), 16_000).unwrap()
            })
            .collect()
    }

    fn concat_rms(clips: &[Waveform]) -> f64 {
        let all: Vec<f32> = clips.iter().flat_map(|c| c.samples().iter().copied()).collect();
        crate::audio::rms(&Waveform::new(all, 16_000).unwrap()).unwrap()
    }

    #[test]
    fn pooled_closed_form() {
        let a = Waveform::new(vec![0.3; 50], 16_000).unwrap();
        let b = Waveform::new(vec![0.4; 50], 16_000).unwrap();
        let r = compute_corpus_rms(&[a.clone(), b]).unwrap();
        assert!((r - (0.125f64).sqrt()).abs() < 1e-7);
        let single = compute_corpus_rms(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single, crate::audio::rms(&a).unwrap());
        assert!(compute_corpus_rms(&[]).is_err());
    }

    #[test]
    fn pooled_matches_concatenation() {
        let clips = random_corpus(11, 10);
        let r = compute_corpus_rms(&clips).unwrap();
        assert!((r - concat_rms(&clips)).abs() < 1e-9);
    }

    #[test]
    fn standardisation_hits_reference() {
        let clips = random_corpus(12, 8);
        let own = compute_corpus_rms(&clips).unwrap();
        let out = standardise_corpus(&clips, own, 0.0421).unwrap();
        let r = compute_corpus_rms(&out).unwrap();
        assert!(((r - 0.0421) / 0.0421).abs() < 1e-6);

        // already at the reference: changes nothing beyond rounding
        let again = standardise_corpus(&out, r, 0.0421).unwrap();
        for (a, b) in out.iter().zip(&again) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn standardisation_identity_and_ratio() {
        let clips = random_corpus(13, 3);
        assert_eq!(standardise_corpus(&clips, 0.2, 0.2).unwrap(), clips);
        let doubled = standardise_corpus(&clips, 0.1, 0.2).unwrap();
        for (a, b) in clips.iter().zip(&doubled) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert_eq!(*y, 2.0 * x);
            }
        }
        assert!(standardise_corpus(&clips, 0.0, 0.2).is_err());
    }
}
