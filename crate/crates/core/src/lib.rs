//! Acoustic scene recognition on 16 kHz mono audio.
//!
//! The pipeline runs dataset construction ([`dataset`]), log-mel patches
//! ([`features`]), a depthwise-separable classifier ([`model`]), head-only
//! training ([`train`]) and evaluation and latency measurement ([`eval`]).

pub mod audio;
pub mod dataset;
mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod seed;
pub mod train;

pub use audio::{Waveform, SAMPLE_RATE_HZ};
pub use dataset::{DatasetManifest, SceneLabel};
pub use error::{Error, Result};
pub use features::{Frontend, FrontendConfig, LogMelPatch};
pub use model::{Classifier, ModelWeights, Network, ScoreVector};
