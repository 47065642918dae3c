use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{DatasetManifest, Split};
use crate::audio::{read_wav, Waveform, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum ClipAudio {
    Memory(Arc<Waveform>),
    File(PathBuf),
}

/// A clip with its class index, as consumed by training and evaluation.
#[derive(Debug, Clone)]
pub struct LabelledClip {
    pub clip_id: String,
    pub label: usize,
    pub audio: ClipAudio,
}

impl LabelledClip {
    pub fn in_memory(clip_id: impl Into<String>, label: usize, w: Waveform) -> Self {
        Self {
            clip_id: clip_id.into(),
            label,
            audio: ClipAudio::Memory(Arc::new(w)),
        }
    }

    pub fn load(&self) -> Result<Waveform> {
        let w = match &self.audio {
            ClipAudio::Memory(w) => return Ok((**w).clone()),
            ClipAudio::File(p) => read_wav(p)?,
        };
        if w.sample_rate_hz() != SAMPLE_RATE_HZ {
            return Err(Error::Dataset(format!(
                "clip {} is sampled at {} Hz, expected {SAMPLE_RATE_HZ}",
                self.clip_id,
                w.sample_rate_hz()
            )));
        }
        Ok(w)
    }
}

/// Clips of one split, labelled by scene-label index, with paths resolved
/// against the dataset root.
pub fn labelled_clips(manifest: &DatasetManifest, root: &Path, split: Split) -> Vec<LabelledClip> {
    manifest
        .clips_in(split)
        .map(|c| LabelledClip {
            clip_id: c.clip_id.clone(),
            label: c.label.index(),
            audio: ClipAudio::File(root.join(&c.path)),
        })
        .collect()
}
