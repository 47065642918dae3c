//! Head-only training on frozen backbone embeddings.

mod adam;
mod embed;
mod loss;
mod plateau;

pub use adam::Adam;
pub use embed::{extract_embeddings, ClipEmbeddings, EmbeddingCache};
pub use loss::{
    batch_focal_loss, focal_loss, focal_loss_grad, head_loss_and_grad, head_scores, smooth_labels, HeadGrad, P_CLAMP,
};
pub use plateau::{plateau_trace, PlateauAction, PlateauState};

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentationConfig, LabelledClip};
use crate::error::{Error, Result};
use crate::eval::{confusion_and_accuracy, mean_average_precision};
use crate::features::FrontendConfig;
use crate::model::{Classifier, DType, ModelWeights};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    Zeros,
    /// Truncated normal with the backbone's initialiser std.
    Random,
    /// Keep whatever head the backbone file carries.
    Backbone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: u32,
    pub plateau_patience_epochs: u32,
    pub decay_factor: f64,
    pub early_stop_patience_epochs: u32,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub head_init: HeadInit,
    pub augmentation: AugmentationConfig,
    /// Only head-only training is implemented.
    pub head_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            max_epochs: 100,
            plateau_patience_epochs: 3,
            decay_factor: 0.5,
            early_stop_patience_epochs: 6,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            label_smoothing: 0.1,
            batch_size: 32,
            seed: 0,
            head_init: HeadInit::Random,
            augmentation: AugmentationConfig::default(),
            head_only: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be finite and non-negative"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::invalid("decay_factor", "must lie in (0, 1)"));
        }
        if self.plateau_patience_epochs == 0 || self.early_stop_patience_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience", "epoch counts must be positive"));
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return Err(Error::invalid("label_smoothing", "must lie in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) || !(self.focal_gamma >= 0.0) {
            return Err(Error::invalid("focal", "need alpha in [0, 1] and gamma >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !self.head_only {
            return Err(Error::invalid(
                "head_only",
                "full-backbone training is not supported; set head_only = true",
            ));
        }
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_map: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.epochs {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// A trained head: the best-validation-loss weights and the last ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadFit {
    pub best_kernel: Vec<f32>,
    pub best_bias: Vec<f32>,
    pub last_kernel: Vec<f32>,
    pub last_bias: Vec<f32>,
    pub best_epoch: u32,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelWeights,
    pub last: ModelWeights,
    pub best_epoch: u32,
    pub history: TrainingHistory,
}

impl TrainOutcome {
    /// Writes `config.json`, `history.csv`, `best.weights` and `final.weights`.
    pub fn save(&self, dir: impl AsRef<Path>, cfg: &TrainConfig, dtype: DType) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(format!("write {}", p.display()), e))
        };
        write("config.json", serde_json::to_string_pretty(cfg)?)?;
        write("history.csv", self.history.to_csv()?)?;
        self.best.save(dir.join("best.weights"), dtype)?;
        self.last.save(dir.join("final.weights"), dtype)
    }
}

fn initial_head(backbone: &ModelWeights, cfg: &TrainConfig) -> Result<(Vec<f32>, Vec<f32>)> {
    let (kernel, bias) = backbone.head()?;
    Ok(match cfg.head_init {
        HeadInit::Backbone => (kernel, bias),
        HeadInit::Zeros => (vec![0.0; kernel.len()], vec![0.0; bias.len()]),
        HeadInit::Random => {
            let std = crate::model::INIT_STD;
            let normal = Normal::new(0.0f32, std).expect("finite std");
            let mut rng = rng_for(cfg.seed, &[stream::INIT, u64::MAX]);
            let k = (0..kernel.len())
                .map(|_| loop {
                    let v = normal.sample(&mut rng);
                    if v.abs() <= 2.0 * std {
                        break v;
                    }
                })
                .collect();
            (k, vec![0.0; bias.len()])
        }
    })
}

fn one_hot(label: usize, c: usize, eps: f64) -> Vec<f64> {
    let y: Vec<f32> = (0..c).map(|j| if j == label { 1.0 } else { 0.0 }).collect();
    smooth_labels(&y, eps)
}

struct Validation {
    loss: f64,
    map: f64,
    acc: f64,
}

fn validate_head(val: &[ClipEmbeddings], kernel: &[f32], bias: &[f32], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<Validation> {
    let c = bias.len();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for clip in val {
        for e in clip.windows.iter() {
            scores.push(head_scores(e, kernel, bias));
            truth.push(clip.label);
        }
    }
    let per_window: Vec<Vec<f64>> = truth.iter().map(|&t| targets[t].clone()).collect();
    let loss = batch_focal_loss(&scores, &per_window, cfg.focal_alpha, cfg.focal_gamma);
    let map = mean_average_precision(&scores, &truth, c).map_or(f64::NAN, |m| m.map);
    let (_, acc) = confusion_and_accuracy(&scores, &truth, c)?;
    Ok(Validation { loss, map, acc })
}

/// The optimisation loop. `train_epoch(epoch)` supplies that epoch's training
/// embeddings (augmented or cached).
fn fit(
    mut train_epoch: impl FnMut(u32) -> Result<Vec<ClipEmbeddings>>,
    val: &[ClipEmbeddings],
    init: (Vec<f32>, Vec<f32>),
    cfg: &TrainConfig,
) -> Result<HeadFit> {
    cfg.validate()?;
    if val.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }
    let (kernel0, bias0) = init;
    let c = bias0.len();
    let d = kernel0.len() / c;
    let targets: Vec<Vec<f64>> = (0..c).map(|l| one_hot(l, c, cfg.label_smoothing)).collect();

    let mut params = adam::flatten(&kernel0, &bias0);
    let mut opt = Adam::new(params.len());
    let mut plateau = PlateauState::new(cfg.plateau_patience_epochs, cfg.early_stop_patience_epochs);
    let mut lr = cfg.learning_rate;
    let mut history = TrainingHistory::default();
    let to_f32 = |p: &[f64]| -> (Vec<f32>, Vec<f32>) {
        let v: Vec<f32> = p.iter().map(|&x| x as f32).collect();
        (v[..d * c].to_vec(), v[d * c..].to_vec())
    };
    let mut best = (kernel0.clone(), bias0.clone(), 0u32, f64::INFINITY);

    for epoch in 1..=cfg.max_epochs {
        let clips = train_epoch(epoch)?;
        let mut examples: Vec<(&[f32], usize)> = Vec::new();
        for clip in &clips {
            for e in clip.windows.iter() {
                if e.len() != d {
                    return Err(Error::Shape(format!("embedding of {} values for a {d}-wide head", e.len())));
                }
                examples.push((e.as_slice(), clip.label));
            }
        }
        if examples.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        examples.shuffle(&mut rng_for(cfg.seed, &[stream::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let embs: Vec<&[f32]> = batch.iter().map(|(e, _)| *e).collect();
            let ys: Vec<&[f64]> = batch.iter().map(|(_, l)| targets[*l].as_slice()).collect();
            let (k, b) = params.split_at(d * c);
            let g = head_loss_and_grad(&embs, &ys, k, b, cfg.focal_alpha, cfg.focal_gamma)?;
            loss_sum += g.loss * batch.len() as f64;
            let grads: Vec<f64> = g.kernel.into_iter().chain(g.bias).collect();
            opt.update(&mut params, &grads, lr)?;
        }
        let train_loss = loss_sum / examples.len() as f64;
        let (k, b) = to_f32(&params);
        let v = validate_head(val, &k, &b, &targets, cfg)?;
        if !(train_loss.is_finite() && v.loss.is_finite()) || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training(format!(
                "diverged at epoch {epoch} (train loss {train_loss}, validation loss {}, lr {lr}); lower the learning rate",
                v.loss
            )));
        }
        tracing::info!(epoch, lr, train_loss, val_loss = v.loss, val_map = v.map, val_acc = v.acc, "epoch");
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss: v.loss,
            val_map: v.map,
            val_acc: v.acc,
        });
        if v.loss < best.3 {
            best = (k, b, epoch, v.loss);
        }
        match plateau.step(v.loss) {
            PlateauAction::KeepLr => {}
            PlateauAction::DecayLr => lr *= cfg.decay_factor,
            PlateauAction::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (last_kernel, last_bias) = to_f32(&params);
    Ok(HeadFit {
        best_kernel: best.0,
        best_bias: best.1,
        last_kernel,
        last_bias,
        best_epoch: best.2,
        history,
    })
}

/// Trains a head on fixed, precomputed embeddings (no augmentation).
pub fn train_head_on_embeddings(
    train: &[ClipEmbeddings],
    val: &[ClipEmbeddings],
    init: (Vec<f32>, Vec<f32>),
    cfg: &TrainConfig,
) -> Result<HeadFit> {
    if init.1.is_empty() || init.0.len() % init.1.len() != 0 {
        return Err(Error::Shape("initial head is not in x out".into()));
    }
    fit(|_| Ok(train.to_vec()), val, init, cfg)
}

fn check_labels(train: &[LabelledClip], backbone: &ModelWeights) -> Result<()> {
    let c = backbone.class_count;
    let mut seen = vec![false; c];
    for clip in train {
        let slot = seen
            .get_mut(clip.label)
            .ok_or_else(|| Error::Dataset(format!("clip {} has label {} outside {c} classes", clip.clip_id, clip.label)))?;
        *slot = true;
    }
    let missing: Vec<String> = (0..c)
        .filter(|&i| !seen[i])
        .map(|i| backbone.labels.get(i).cloned().unwrap_or_else(|| i.to_string()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Dataset(format!(
            "training split has no clips for: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Trains the dense head of `backbone` with everything before pooling frozen.
pub fn train_head(
    train: &[LabelledClip],
    val: &[LabelledClip],
    backbone: &ModelWeights,
    frontend: &FrontendConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset("training and validation splits must be non-empty".into()));
    }
    check_labels(train, backbone)?;
    let classifier = Classifier::new(backbone, frontend.clone())?;
    let cache = EmbeddingCache::new();
    let val_emb = extract_embeddings(val, &classifier, &AugmentationConfig::disabled(), 0, &cache)?;
    let fitted = fit(
        |epoch| {
            if cfg.augmentation.is_enabled() {
                cache.evict_before(epoch);
            }
            extract_embeddings(train, &classifier, &cfg.augmentation, epoch, &cache)
        },
        &val_emb,
        initial_head(backbone, cfg)?,
        cfg,
    )?;
    let mut best = backbone.clone();
    best.set_head(&fitted.best_kernel, &fitted.best_bias)?;
    let mut last = backbone.clone();
    last.set_head(&fitted.last_kernel, &fitted.last_bias)?;
    Ok(TrainOutcome {
        best,
        last,
        best_epoch: fitted.best_epoch,
        history: fitted.history,
    })
}
