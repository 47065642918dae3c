//! Executable form of a [`ModelWeights`]: tensors decoded to f32 once, batch
//! norm optionally folded into the preceding convolution.

use rayon::prelude::*;
use serde::Serialize;

use super::kernels::{
    apply_affine, batch_norm_affine, conv2d, dense, depthwise_conv2d, global_avg_pool, relu_inplace, sigmoid, Tensor3,
};
use super::weights::{LayerKind, LayerSpec, ModelWeights, TensorData, TensorRole};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::features::{Frontend, FrontendConfig, LogMelPatch};

/// Independent per-label sigmoid scores for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub window_index: usize,
    pub scores: Vec<f32>,
}

impl ScoreVector {
    /// Highest-scoring label; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
enum Op {
    Conv {
        kernel: Vec<f32>,
        kh: usize,
        kw: usize,
        cout: usize,
        stride: usize,
        bias: Option<Vec<f32>>,
    },
    Depthwise {
        kernel: Vec<f32>,
        kh: usize,
        kw: usize,
        stride: usize,
        bias: Option<Vec<f32>>,
    },
    Affine {
        scale: Vec<f32>,
        shift: Vec<f32>,
    },
    Relu,
}

impl Op {
    fn run(&self, x: Tensor3) -> Result<Tensor3> {
        match self {
            Op::Conv {
                kernel,
                kh,
                kw,
                cout,
                stride,
                bias,
            } => conv2d(&x, kernel, *kh, *kw, *cout, *stride, bias.as_deref()),
            Op::Depthwise {
                kernel,
                kh,
                kw,
                stride,
                bias,
            } => depthwise_conv2d(&x, kernel, *kh, *kw, *stride, bias.as_deref()),
            Op::Affine { scale, shift } => {
                let mut x = x;
                apply_affine(&mut x, scale, shift)?;
                Ok(x)
            }
            Op::Relu => {
                let mut x = x;
                relu_inplace(&mut x.data);
                Ok(x)
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Conv { .. } => "conv",
            Op::Depthwise { .. } => "depthwise_conv",
            Op::Affine { .. } => "batch_norm",
            Op::Relu => "relu",
        }
    }
}

fn f32_tensor(l: &LayerSpec, role: TensorRole) -> Option<Vec<f32>> {
    l.tensor(role).map(TensorData::to_f32)
}

fn bn_affine(l: &LayerSpec, eps: f32) -> Result<(Vec<f32>, Vec<f32>)> {
    let need = |r| f32_tensor(l, r).ok_or_else(|| Error::Shape(format!("batch norm lacks {r:?}")));
    let gamma = f32_tensor(l, TensorRole::Gamma);
    batch_norm_affine(
        gamma.as_deref(),
        &need(TensorRole::Beta)?,
        &need(TensorRole::MovingMean)?,
        &need(TensorRole::MovingVariance)?,
        eps,
    )
}

fn conv_op(l: &LayerSpec) -> Result<Op> {
    let kernel = f32_tensor(l, TensorRole::Kernel).ok_or_else(|| Error::Shape("convolution lacks a kernel".into()))?;
    let (kh, kw, stride) = (l.kernel[0] as usize, l.kernel[1] as usize, l.stride as usize);
    let bias = f32_tensor(l, TensorRole::Bias);
    Ok(match l.kind {
        LayerKind::Conv => Op::Conv {
            kernel,
            kh,
            kw,
            cout: l.out_channels as usize,
            stride,
            bias,
        },
        _ => Op::Depthwise {
            kernel,
            kh,
            kw,
            stride,
            bias,
        },
    })
}

/// Scales each output channel of a convolution and adds a per-channel shift.
fn fold_into(op: &mut Op, scale: &[f32], shift: &[f32]) {
    let (kernel, bias) = match op {
        Op::Conv { kernel, bias, .. } | Op::Depthwise { kernel, bias, .. } => (kernel, bias),
        _ => unreachable!("only convolutions absorb batch norm"),
    };
    let c = scale.len();
    for row in kernel.chunks_exact_mut(c) {
        row.iter_mut().zip(scale).for_each(|(k, s)| *k *= s);
    }
    let b = bias.get_or_insert_with(|| vec![0.0; c]);
    for ((b, s), t) in b.iter_mut().zip(scale).zip(shift) {
        *b = *b * s + t;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkOptions {
    pub fold_batch_norm: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self { fold_batch_norm: true }
    }
}

/// Immutable, reentrant forward pass.
#[derive(Debug, Clone)]
pub struct Network {
    backbone: Vec<Op>,
    head_kernel: Vec<f32>,
    head_bias: Vec<f32>,
    in_channels: usize,
    labels: Vec<String>,
}

impl Network {
    pub fn new(m: &ModelWeights) -> Result<Self> {
        Self::with_options(m, NetworkOptions::default())
    }

    pub fn with_options(m: &ModelWeights, opts: NetworkOptions) -> Result<Self> {
        m.validate()?;
        let pool = m
            .layers
            .iter()
            .position(|l| l.kind == LayerKind::GlobalAvgPool)
            .ok_or_else(|| Error::Shape("model has no global average pool".into()))?;
        let tail: Vec<LayerKind> = m.layers[pool + 1..].iter().map(|l| l.kind).collect();
        if tail != [LayerKind::Dense, LayerKind::Sigmoid] {
            return Err(Error::Shape(format!(
                "expected dense + sigmoid after pooling, found {tail:?}"
            )));
        }
        let mut backbone: Vec<Op> = Vec::with_capacity(pool);
        for l in &m.layers[..pool] {
            match l.kind {
                LayerKind::Conv | LayerKind::DepthwiseConv => backbone.push(conv_op(l)?),
                LayerKind::BatchNorm => {
                    let (scale, shift) = bn_affine(l, m.bn_epsilon)?;
                    match backbone.last_mut() {
                        Some(prev @ (Op::Conv { .. } | Op::Depthwise { .. })) if opts.fold_batch_norm => {
                            fold_into(prev, &scale, &shift)
                        }
                        _ => backbone.push(Op::Affine { scale, shift }),
                    }
                }
                LayerKind::Relu => backbone.push(Op::Relu),
                other => return Err(Error::Shape(format!("{other:?} is not allowed before pooling"))),
            }
        }
        let head = &m.layers[pool + 1];
        Ok(Self {
            backbone,
            head_kernel: f32_tensor(head, TensorRole::Kernel).unwrap_or_default(),
            head_bias: f32_tensor(head, TensorRole::Bias).unwrap_or_default(),
            in_channels: m.layers.first().map_or(1, |l| l.in_channels as usize),
            labels: m.labels.clone(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.head_bias.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.head_kernel.len() / self.class_count().max(1)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn input(&self, patch: &LogMelPatch) -> Result<Tensor3> {
        if self.in_channels != 1 {
            return Err(Error::Shape(format!(
                "model expects {} input channels; patches have one",
                self.in_channels
            )));
        }
        Tensor3::new(patch.frames(), patch.bands(), 1, patch.values().to_vec())
    }

    fn backbone(&self, patch: &LogMelPatch) -> Result<Tensor3> {
        self.backbone.iter().try_fold(self.input(patch)?, |x, op| op.run(x))
    }

    /// Output shape after each backbone op, ending with the pre-pool tensor.
    pub fn trace_shapes(&self, patch: &LogMelPatch) -> Result<Vec<(&'static str, [usize; 3])>> {
        let mut x = self.input(patch)?;
        let mut out = Vec::with_capacity(self.backbone.len());
        for op in &self.backbone {
            x = op.run(x)?;
            out.push((op.name(), x.shape()));
        }
        Ok(out)
    }

    /// Pooled embedding (the input to the dense head).
    pub fn embed(&self, patch: &LogMelPatch) -> Result<Vec<f32>> {
        Ok(global_avg_pool(&self.backbone(patch)?))
    }

    pub fn logits(&self, embedding: &[f32]) -> Result<Vec<f32>> {
        dense(embedding, &self.head_kernel, &self.head_bias)
    }

    pub fn scores_from_embedding(&self, embedding: &[f32], window_index: usize) -> Result<ScoreVector> {
        Ok(ScoreVector {
            window_index,
            scores: self.logits(embedding)?.into_iter().map(sigmoid).collect(),
        })
    }

    pub fn forward(&self, patch: &LogMelPatch, window_index: usize) -> Result<ScoreVector> {
        self.scores_from_embedding(&self.embed(patch)?, window_index)
    }
}

/// One-shot convenience; prefer a cached [`Network`] for repeated calls.
pub fn forward_patch(patch: &LogMelPatch, m: &ModelWeights) -> Result<ScoreVector> {
    Network::new(m)?.forward(patch, 0)
}

/// Frontend plus network: waveform in, one score vector per window out.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub frontend: Frontend,
    pub network: Network,
}

impl Classifier {
    pub fn new(m: &ModelWeights, frontend: FrontendConfig) -> Result<Self> {
        Ok(Self {
            frontend: Frontend::new(frontend)?,
            network: Network::new(m)?,
        })
    }

    /// Windows are scored independently and in parallel; order is preserved.
    pub fn infer_clip(&self, w: &Waveform) -> Result<Vec<ScoreVector>> {
        let patches = self.frontend.patches(w)?;
        patches
            .par_iter()
            .enumerate()
            .map(|(i, p)| self.network.forward(p, i))
            .collect()
    }

    /// Pooled embeddings for every window of a clip.
    pub fn embed_clip(&self, w: &Waveform) -> Result<Vec<Vec<f32>>> {
        let patches = self.frontend.patches(w)?;
        patches.par_iter().map(|p| self.network.embed(p)).collect()
    }

    /// Sequential variant, for latency measurement on one thread.
    pub fn infer_clip_serial(&self, w: &Waveform) -> Result<Vec<ScoreVector>> {
        self.frontend
            .patches(w)?
            .iter()
            .enumerate()
            .map(|(i, p)| self.network.forward(p, i))
            .collect()
    }
}

pub fn infer_clip(w: &Waveform, m: &ModelWeights) -> Result<Vec<ScoreVector>> {
    Classifier::new(m, FrontendConfig::default())?.infer_clip(w)
}

/// Sets every batch-norm moving mean and variance from the statistics of
/// `patches`, layer by layer. A randomly initialised backbone otherwise
/// saturates or collapses after a few blocks.
pub fn calibrate_batch_norm(m: &mut ModelWeights, patches: &[LogMelPatch]) -> Result<()> {
    if patches.is_empty() {
        return Err(Error::Empty("calibration patches"));
    }
    let pool = m
        .layers
        .iter()
        .position(|l| l.kind == LayerKind::GlobalAvgPool)
        .ok_or_else(|| Error::Shape("model has no global average pool".into()))?;
    let dtype = m.dtype;
    let eps = m.bn_epsilon;
    let mut acts: Vec<Tensor3> = patches
        .iter()
        .map(|p| Tensor3::new(p.frames(), p.bands(), 1, p.values().to_vec()))
        .collect::<Result<_>>()?;
    for i in 0..pool {
        let layer = &mut m.layers[i];
        let op = match layer.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv => conv_op(layer)?,
            LayerKind::Relu => Op::Relu,
            LayerKind::BatchNorm => {
                let c = layer.out_channels as usize;
                let mut sum = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                let mut n = 0usize;
                for a in &acts {
                    for px in a.data.chunks_exact(c) {
                        for (j, &v) in px.iter().enumerate() {
                            sum[j] += v as f64;
                            sq[j] += v as f64 * v as f64;
                        }
                    }
                    n += a.h * a.w;
                }
                let mean: Vec<f32> = sum.iter().map(|s| (s / n as f64) as f32).collect();
                let var: Vec<f32> = sum
                    .iter()
                    .zip(&sq)
                    .map(|(s, q)| {
                        let mu = s / n as f64;
                        (q / n as f64 - mu * mu).max(0.0) as f32
                    })
                    .collect();
                layer.set_tensor(TensorRole::MovingMean, TensorData::F32(mean).converted(dtype));
                layer.set_tensor(TensorRole::MovingVariance, TensorData::F32(var).converted(dtype));
                let (scale, shift) = bn_affine(layer, eps)?;
                Op::Affine { scale, shift }
            }
            other => return Err(Error::Shape(format!("{other:?} is not allowed before pooling"))),
        };
        acts = acts.into_par_iter().map(|a| op.run(a)).collect::<Result<_>>()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::arch::{mobilenet, ArchConfig, Init, INIT_STD};

    fn patch(seed: u32) -> LogMelPatch {
        let v = (0..96 * 64)
            .map(|i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed * 97) % 1000) as f32 / 200.0 - 6.0)
            .collect();
        LogMelPatch::new(v, 96, 64, 0.0)
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = mobilenet(&ArchConfig::new(14), Init::Zeros).unwrap();
        let s = forward_patch(&patch(1), &m).unwrap();
        assert_eq!(s.scores, vec![0.5; 14]);
    }

    #[test]
    fn shape_chain() {
        let m = mobilenet(&ArchConfig::new(3), Init::Zeros).unwrap();
        let net = Network::with_options(&m, NetworkOptions { fold_batch_norm: false }).unwrap();
        let shapes = net.trace_shapes(&patch(0)).unwrap();
        let mut spatial: Vec<[usize; 2]> = shapes.iter().map(|(_, s)| [s[0], s[1]]).collect();
        spatial.dedup();
        assert_eq!(spatial, vec![[48, 32], [24, 16], [12, 8], [6, 4], [3, 2]]);
        assert_eq!(shapes.last().unwrap().1, [3, 2, 1024]);
    }

    #[test]
    fn folding_preserves_outputs() {
        let mut m = mobilenet(&ArchConfig::new(5), Init::Random { seed: 3, std: INIT_STD }).unwrap();
        let patches: Vec<_> = (0..3).map(patch).collect();
        calibrate_batch_norm(&mut m, &patches).unwrap();
        let folded = Network::new(&m).unwrap();
        let plain = Network::with_options(&m, NetworkOptions { fold_batch_norm: false }).unwrap();
        let p = patch(9);
        let (a, b) = (folded.embed(&p).unwrap(), plain.embed(&p).unwrap());
        let scale = b.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-4 * scale.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn calibrated_embeddings_are_informative() {
        let mut m = mobilenet(&ArchConfig::new(2), Init::Random { seed: 1, std: INIT_STD }).unwrap();
        let patches: Vec<_> = (0..4).map(patch).collect();
        calibrate_batch_norm(&mut m, &patches).unwrap();
        let net = Network::new(&m).unwrap();
        let e = net.embed(&patch(2)).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
        assert!(e.iter().filter(|&&v| v > 0.0).count() > 100);
    }

    #[test]
    fn head_bias_moves_one_logit() {
        let mut m = mobilenet(&ArchConfig::new(4), Init::Random { seed: 2, std: INIT_STD }).unwrap();
        let net = Network::new(&m).unwrap();
        let e = net.embed(&patch(3)).unwrap();
        let before = net.logits(&e).unwrap();
        let (k, mut b) = m.head().unwrap();
        b[2] += 0.75;
        m.set_head(&k, &b).unwrap();
        let after = Network::new(&m).unwrap().logits(&e).unwrap();
        for j in 0..4 {
            let d = after[j] - before[j];
            let want = if j == 2 { 0.75 } else { 0.0 };
            assert!((d - want).abs() < 1e-5);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.5; 4]), 0);
    }
}
