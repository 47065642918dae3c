//! Resolved run configuration: built-in defaults, then an optional JSON file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scene_core::eval::DEFAULT_GAINS_DB;
use scene_core::model::DType;
use scene_core::train::TrainConfig;
use scene_core::FrontendConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandConfig {
    pub seed: u64,
    /// Worker threads; `None` lets the pool pick.
    pub threads: Option<usize>,
    pub log_level: String,
    pub frontend: FrontendConfig,
    pub build_dataset: BuildDatasetOptions,
    pub train: TrainOptions,
    pub eval: EvalOptions,
    pub infer: InferOptions,
    pub bench: BenchOptions,
}

impl Default for CommandConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            log_level: "info".into(),
            frontend: FrontendConfig::default(),
            build_dataset: BuildDatasetOptions::default(),
            train: TrainOptions::default(),
            eval: EvalOptions::default(),
            infer: InferOptions::default(),
            bench: BenchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildDatasetOptions {
    pub sources: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub split_ratios: Option<[f64; 3]>,
    pub interfering_speakers_quota: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub dataset: Option<PathBuf>,
    /// Starting weights. Without one a random backbone is built and its batch
    /// norm statistics are calibrated on training clips.
    pub backbone: Option<PathBuf>,
    pub calibration_clips: usize,
    pub out: Option<PathBuf>,
    pub dtype: DType,
    /// More than one rate runs a sweep, one sub-directory per rate.
    pub learning_rates: Vec<f64>,
    pub params: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            dataset: None,
            backbone: None,
            calibration_clips: 8,
            out: None,
            dtype: DType::F32,
            learning_rates: Vec::new(),
            params: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: String,
    pub out: Option<PathBuf>,
    pub gain_db: f64,
    /// Non-empty: also run a gain sweep over these offsets.
    pub sweep_gains_db: Vec<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            model: None,
            dataset: None,
            split: "test".into(),
            out: None,
            gain_db: 0.0,
            sweep_gains_db: Vec::new(),
        }
    }
}

pub fn default_sweep() -> Vec<f64> {
    DEFAULT_GAINS_DB.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    None,
    Mean,
    /// Sum the window scores per class, then softmax across classes.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferOptions {
    pub model: Option<PathBuf>,
    pub wav: Option<PathBuf>,
    pub gain_db: f64,
    pub aggregate: Aggregate,
    pub format: Format,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            model: None,
            wav: None,
            gain_db: 0.0,
            aggregate: Aggregate::None,
            format: Format::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchOptions {
    /// Without a model a random 14-class network is timed; the cost does not
    /// depend on the weight values.
    pub model: Option<PathBuf>,
    pub durations_s: Vec<f64>,
    pub repeats: usize,
    pub out: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            model: None,
            durations_s: vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0],
            repeats: 3,
            out: None,
        }
    }
}

impl CommandConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))
    }

    /// Written next to every artifact so a run can be repeated from it.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved_config.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
