//! Dataset construction: corpus standardisation, speech/environment mixing,
//! per-label splitting, the manifest, and training-time augmentation.

mod augment;
mod builder;
mod clips;
mod labels;
mod manifest;
pub mod sources;
mod split;
mod standardise;

pub use augment::{augment_clip, AugmentationConfig, AugmentationTrace};
pub use builder::{build_mixed_dataset, BuildConfig, ClipSink, DirSink, NullSink, SNR_CYCLE_DB};
pub use clips::{labelled_clips, ClipAudio, LabelledClip};
pub use labels::SceneLabel;
pub use manifest::{ClipRecord, DatasetManifest, SpeechSource, Split, DEFAULT_SPLIT_RATIOS};
pub use sources::{slice_speech_recording, BuildInputs, Corpus, SourceClip, SourcesDescriptor};
pub use split::{apportion, split_dataset};
pub use standardise::{compute_corpus_rms, standardise_corpus, PooledRms};
