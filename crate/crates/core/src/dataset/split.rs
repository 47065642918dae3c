use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{DatasetManifest, SceneLabel, Split};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Largest-remainder apportionment of `n` items over `ratios`.
/// Remainder ties go to the earlier split.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Assigns train/validation/test per label: clips of each label are shuffled
/// by a stream keyed on `(seed, label)` and then cut by [`apportion`].
pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(Error::invalid("ratios", format!("{ratios:?} must be non-negative and sum to 1")));
    }
    let mut by_label: BTreeMap<SceneLabel, Vec<usize>> = BTreeMap::new();
    for (i, c) in manifest.clips.iter().enumerate() {
        by_label.entry(c.label).or_default().push(i);
    }
    let mut out = manifest.clone();
    out.split_ratios = ratios;
    out.seed = seed;
    for (label, mut idx) in by_label {
        if idx.len() < 3 {
            return Err(Error::Dataset(format!(
                "label {label} has {} clips; at least 3 are needed to fill every split",
                idx.len()
            )));
        }
        let mut rng = rng_for(seed, &[stream::SPLIT, label.index() as u64]);
        idx.shuffle(&mut rng);
        let sizes = apportion(idx.len(), ratios);
        let mut cursor = 0;
        for (split, size) in Split::ALL.into_iter().zip(sizes) {
            for &i in &idx[cursor..cursor + size] {
                out.clips[i].split = Some(split);
            }
            cursor += size;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClipRecord, DEFAULT_SPLIT_RATIOS};

    fn manifest_with(counts: &[(SceneLabel, usize)]) -> DatasetManifest {
        let mut clips = Vec::new();
        for &(label, n) in counts {
            for i in 0..n {
                clips.push(ClipRecord {
                    clip_id: format!("{label}_{i:05}"),
                    path: String::new(),
                    label,
                    split: None,
                    duration_s: 10.0,
                    snr_db: None,
                    speech_source: None,
                    environment_source: Some(format!("src{i}")),
                });
            }
        }
        DatasetManifest {
            clips,
            reference_rms: 0.1,
            per_corpus_rms: BTreeMap::new(),
            seed: 0,
            split_ratios: DEFAULT_SPLIT_RATIOS,
            notes: vec![],
        }
    }

    #[test]
    fn apportion_cases() {
        assert_eq!(apportion(1047, DEFAULT_SPLIT_RATIOS), [733, 105, 209]);
        assert_eq!(apportion(10, DEFAULT_SPLIT_RATIOS), [7, 1, 2]);
        let s = apportion(222, DEFAULT_SPLIT_RATIOS);
        assert_eq!(s.iter().sum::<usize>(), 222);
    }

    #[test]
    fn apportion_within_one_of_quota() {
        for n in 3..3000 {
            let s = apportion(n, DEFAULT_SPLIT_RATIOS);
            assert_eq!(s.iter().sum::<usize>(), n);
            for (size, r) in s.iter().zip(DEFAULT_SPLIT_RATIOS) {
                assert!((*size as f64 - r * n as f64).abs() <= 1.0, "n={n} {s:?}");
            }
        }
    }

    #[test]
    fn split_is_reproducible_and_seed_sensitive() {
        let m = manifest_with(&[(SceneLabel::Music, 40), (SceneLabel::CocktailParty, 13)]);
        let a = split_dataset(&m, DEFAULT_SPLIT_RATIOS, 5).unwrap();
        let b = split_dataset(&m, DEFAULT_SPLIT_RATIOS, 5).unwrap();
        let c = split_dataset(&m, DEFAULT_SPLIT_RATIOS, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.split_counts()[&SceneLabel::Music], [28, 4, 8]);
        assert!(a.clips.iter().all(|c| c.split.is_some()));
    }

    #[test]
    fn too_few_clips() {
        let m = manifest_with(&[(SceneLabel::Music, 2)]);
        assert!(split_dataset(&m, DEFAULT_SPLIT_RATIOS, 1).is_err());
        let m = manifest_with(&[(SceneLabel::Music, 20)]);
        assert!(split_dataset(&m, [0.5, 0.5, 0.5], 1).is_err());
    }
}
