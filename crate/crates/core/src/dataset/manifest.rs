use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneLabel;
use crate::error::{Error, Result};

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.70, 0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid("split", format!("unknown split `{s}`"))),
        }
    }
}

/// Where a speech clip came from: recording id and start offset in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSource {
    pub file: String,
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub clip_id: String,
    /// Relative to the dataset root.
    pub path: String,
    pub label: SceneLabel,
    pub split: Option<Split>,
    pub duration_s: f64,
    pub snr_db: Option<f64>,
    pub speech_source: Option<SpeechSource>,
    pub environment_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub clips: Vec<ClipRecord>,
    /// Pooled RMS of the speech corpus; every other corpus is scaled to it.
    pub reference_rms: f64,
    pub per_corpus_rms: BTreeMap<String, f64>,
    pub seed: u64,
    pub split_ratios: [f64; 3],
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DatasetManifest {
    pub fn label_counts(&self) -> BTreeMap<SceneLabel, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.clips {
            *counts.entry(c.label).or_insert(0) += 1;
        }
        counts
    }

    /// Per-label `[train, validation, test]` counts.
    pub fn split_counts(&self) -> BTreeMap<SceneLabel, [usize; 3]> {
        let mut counts = BTreeMap::new();
        for c in &self.clips {
            let row = counts.entry(c.label).or_insert([0usize; 3]);
            if let Some(s) = c.split {
                row[s as usize] += 1;
            }
        }
        counts
    }

    pub fn clips_in(&self, split: Split) -> impl Iterator<Item = &ClipRecord> {
        self.clips.iter().filter(move |c| c.split == Some(split))
    }

    /// Checks the structural invariants of the catalogue.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_ratios.iter().any(|&r| r < 0.0) {
            return Err(Error::Dataset(format!(
                "split ratios {:?} do not sum to 1",
                self.split_ratios
            )));
        }
        let mut ids = HashSet::new();
        let mut speech = HashSet::new();
        for c in &self.clips {
            if !ids.insert(c.clip_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate clip id {}", c.clip_id)));
            }
            let mixed = c.label.is_speech_mix();
            if c.snr_db.is_some() != mixed {
                return Err(Error::Dataset(format!(
                    "{}: snr_db must be present exactly for speech_in_* labels",
                    c.clip_id
                )));
            }
            let speech_expected = mixed || c.label == SceneLabel::InterferingSpeakers;
            if c.speech_source.is_some() != speech_expected {
                return Err(Error::Dataset(format!(
                    "{}: speech_source presence does not match label {}",
                    c.clip_id, c.label
                )));
            }
            let env_expected = c.label != SceneLabel::InterferingSpeakers;
            if c.environment_source.is_some() != env_expected {
                return Err(Error::Dataset(format!(
                    "{}: environment_source presence does not match label {}",
                    c.clip_id, c.label
                )));
            }
            if let Some(s) = &c.speech_source {
                let key = (s.file.as_str(), s.offset_s.to_bits());
                if !speech.insert(key) {
                    return Err(Error::Dataset(format!(
                        "speech clip {}@{}s used more than once",
                        s.file, s.offset_s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_json(&text)
    }

    /// Flat `clip_id,path,label,split,snr_db` view.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["clip_id", "path", "label", "split", "snr_db"])?;
        for c in &self.clips {
            w.write_record([
                c.clip_id.as_str(),
                c.path.as_str(),
                c.label.as_str(),
                c.split.map(Split::as_str).unwrap_or(""),
                &c.snr_db.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(format!("write {}", p.display()), e))
        };
        write("manifest.json", self.to_json()?)?;
        write("manifest.csv", self.to_csv()?)
    }
}
