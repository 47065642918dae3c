//! Source corpora: lazily loaded clips plus the JSON descriptor that maps
//! directories of WAV files onto scene labels.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SceneLabel;
use crate::audio::{read_wav, read_wav_info, read_wav_range, Waveform, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Seconds skipped at the start of every speech recording.
pub const SPEECH_LEAD_IN_S: usize = 1;
/// Length of every produced clip in seconds.
pub const CLIP_SECONDS: usize = 10;
/// At most this many clips are cut from one speech recording.
pub const MAX_CLIPS_PER_RECORDING: usize = 110;

type Loader = Arc<dyn Fn() -> Result<Waveform> + Send + Sync>;

/// One source clip, loaded on demand so whole corpora never sit in memory.
#[derive(Clone)]
pub struct SourceClip {
    pub source_id: String,
    pub offset_s: f64,
    loader: Loader,
}

impl fmt::Debug for SourceClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceClip")
            .field("source_id", &self.source_id)
            .field("offset_s", &self.offset_s)
            .finish_non_exhaustive()
    }
}

fn require_rate(path: &Path, w: Waveform) -> Result<Waveform> {
    if w.sample_rate_hz() != SAMPLE_RATE_HZ {
        return Err(Error::Dataset(format!(
            "{} is sampled at {} Hz; convert it to {} Hz first",
            path.display(),
            w.sample_rate_hz(),
            SAMPLE_RATE_HZ
        )));
    }
    Ok(w)
}

impl SourceClip {
    pub fn from_fn(
        source_id: impl Into<String>,
        offset_s: f64,
        f: impl Fn() -> Result<Waveform> + Send + Sync + 'static,
    ) -> Self {
        Self {
            source_id: source_id.into(),
            offset_s,
            loader: Arc::new(f),
        }
    }

    pub fn in_memory(source_id: impl Into<String>, offset_s: f64, w: Waveform) -> Self {
        let w = Arc::new(w);
        Self::from_fn(source_id, offset_s, move || Ok((*w).clone()))
    }

    pub fn from_file(source_id: impl Into<String>, path: PathBuf) -> Self {
        Self::from_fn(source_id, 0.0, move || require_rate(&path, read_wav(&path)?))
    }

    fn from_file_range(source_id: String, path: PathBuf, start: usize, len: usize, rate: u32) -> Self {
        let offset_s = start as f64 / rate as f64;
        Self::from_fn(source_id, offset_s, move || {
            require_rate(&path, read_wav_range(&path, start, len)?)
        })
    }

    pub fn load(&self) -> Result<Waveform> {
        (self.loader)()
    }
}

/// Start samples of the clips cut from a speech recording of `len` samples.
pub fn speech_clip_starts(len: usize, sample_rate_hz: u32) -> Result<Vec<usize>> {
    let rate = sample_rate_hz as usize;
    let lead = SPEECH_LEAD_IN_S * rate;
    if len < lead {
        return Err(Error::invalid(
            "recording",
            format!("{len} samples is shorter than the {SPEECH_LEAD_IN_S} s lead-in"),
        ));
    }
    let clip = CLIP_SECONDS * rate;
    let count = ((len - lead) / clip).min(MAX_CLIPS_PER_RECORDING);
    Ok((0..count).map(|i| lead + i * clip).collect())
}

/// Drops the first second, then cuts consecutive 10 s clips (at most 110).
pub fn slice_speech_recording(w: &Waveform) -> Result<Vec<Waveform>> {
    let clip = CLIP_SECONDS * w.sample_rate_hz() as usize;
    speech_clip_starts(w.len(), w.sample_rate_hz())?
        .into_iter()
        .map(|start| w.slice(start, clip))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    /// `None` for the speech corpus.
    pub label: Option<SceneLabel>,
    /// Corpus whose pooled RMS this one is divided by before being scaled to
    /// the speech reference level.
    pub standardise_by: String,
    pub clips: Vec<SourceClip>,
}

#[derive(Debug, Clone)]
pub struct BuildInputs {
    pub speech: Corpus,
    pub environments: Vec<Corpus>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechDescriptor {
    pub name: String,
    pub root: PathBuf,
    /// Explicit recording list; all `*.wav` under `root` when absent.
    #[serde(default)]
    pub files: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDescriptor {
    pub name: String,
    pub label: SceneLabel,
    pub root: PathBuf,
    #[serde(default = "default_standardise_by")]
    pub standardise_by: String,
    #[serde(default)]
    pub files: Option<Vec<String>>,
}

fn default_standardise_by() -> String {
    "cocktail_party".to_string()
}

/// `sources.json`: the speech recordings and one entry per environment corpus.
/// Relative roots resolve against the descriptor's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesDescriptor {
    pub speech: SpeechDescriptor,
    pub corpora: Vec<CorpusDescriptor>,
}

fn list_wavs(root: &Path, files: &Option<Vec<String>>) -> Result<Vec<String>> {
    if let Some(files) = files {
        return Ok(files.clone());
    }
    let entries = std::fs::read_dir(root)
        .map_err(|e| Error::io(format!("list {}", root.display()), e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("list {}", root.display()), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".wav") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

impl SourcesDescriptor {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let desc: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((desc, base))
    }

    /// Resolves files and turns the descriptor into lazily loaded corpora.
    /// Speech recordings are inspected for length (header only) and cut into
    /// clip ranges here.
    pub fn resolve(&self, base: &Path) -> Result<BuildInputs> {
        let speech_root = base.join(&self.speech.root);
        let mut speech_clips = Vec::new();
        for name in list_wavs(&speech_root, &self.speech.files)? {
            let path = speech_root.join(&name);
            let info = read_wav_info(&path)?;
            if info.sample_rate_hz != SAMPLE_RATE_HZ {
                return Err(Error::Dataset(format!(
                    "{} is sampled at {} Hz; convert it to {} Hz first",
                    path.display(),
                    info.sample_rate_hz,
                    SAMPLE_RATE_HZ
                )));
            }
            let clip_len = CLIP_SECONDS * info.sample_rate_hz as usize;
            for start in speech_clip_starts(info.num_samples as usize, info.sample_rate_hz)? {
                speech_clips.push(SourceClip::from_file_range(
                    name.clone(),
                    path.clone(),
                    start,
                    clip_len,
                    info.sample_rate_hz,
                ));
            }
        }
        let speech = Corpus {
            name: self.speech.name.clone(),
            label: None,
            standardise_by: self.speech.name.clone(),
            clips: speech_clips,
        };

        let mut environments = Vec::new();
        for c in &self.corpora {
            let root = base.join(&c.root);
            let clips = list_wavs(&root, &c.files)?
                .into_iter()
                .map(|name| {
                    let path = root.join(&name);
                    SourceClip::from_file(name, path)
                })
                .collect();
            environments.push(Corpus {
                name: c.name.clone(),
                label: Some(c.label),
                standardise_by: c.standardise_by.clone(),
                clips,
            });
        }
        Ok(BuildInputs {
            speech,
            environments,
        })
    }
}
