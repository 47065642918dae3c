//! The depthwise-separable backbone (width 1.0 MobileNet v1) and its sigmoid head.

use rand_distr::{Distribution, Normal};

use super::weights::{DType, LayerKind, LayerSpec, ModelWeights, TensorData, TensorRole};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

pub const STEM_FILTERS: usize = 32;
pub const EMBEDDING_DIM: usize = 1024;
pub const BN_EPSILON: f32 = 1e-3;
pub const INIT_STD: f32 = 0.09;

/// `(pointwise filters, depthwise stride)` for the 13 separable blocks.
pub const BLOCKS: [(usize, usize); 13] = [
    (64, 1),
    (128, 2),
    (128, 1),
    (256, 2),
    (256, 1),
    (512, 2),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (1024, 2),
    (1024, 1),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// All kernels and biases zero; batch norm is the identity.
    Zeros,
    /// Truncated normal kernels (cut at two standard deviations).
    Random { seed: u64, std: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub class_count: usize,
    pub labels: Vec<String>,
    /// Store a batch-norm gamma. The reference checkpoints are centre-only.
    pub bn_scale: bool,
}

impl ArchConfig {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            labels: Vec::new(),
            bn_scale: false,
        }
    }

    pub fn with_labels(labels: Vec<String>) -> Self {
        Self {
            class_count: labels.len(),
            labels,
            bn_scale: false,
        }
    }
}

struct Filler {
    init: Init,
    layer: u64,
}

impl Filler {
    fn kernel(&mut self, n: usize) -> Vec<f32> {
        self.layer += 1;
        match self.init {
            Init::Zeros => vec![0.0; n],
            Init::Random { seed, std } => {
                let mut rng = rng_for(seed, &[stream::INIT, self.layer]);
                let normal = Normal::new(0.0f32, std).expect("finite std");
                (0..n)
                    .map(|_| loop {
                        let v = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * std {
                            break v;
                        }
                    })
                    .collect()
            }
        }
    }
}

fn batch_norm(c: usize, scale: bool) -> LayerSpec {
    let mut l = LayerSpec::new(LayerKind::BatchNorm, [1, 1], 1, c, c)
        .with_tensor(TensorRole::Beta, vec![0.0; c])
        .with_tensor(TensorRole::MovingMean, vec![0.0; c])
        .with_tensor(TensorRole::MovingVariance, vec![1.0; c]);
    if scale {
        l.set_tensor(TensorRole::Gamma, TensorData::F32(vec![1.0; c]));
    }
    l
}

fn relu(c: usize) -> LayerSpec {
    LayerSpec::new(LayerKind::Relu, [1, 1], 1, c, c)
}

/// Builds the full classifier at f32.
pub fn mobilenet(cfg: &ArchConfig, init: Init) -> Result<ModelWeights> {
    if cfg.class_count == 0 {
        return Err(Error::invalid("class_count", "must be positive"));
    }
    if let Init::Random { std, .. } = init {
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::invalid("std", "must be positive and finite"));
        }
    }
    let mut fill = Filler { init, layer: 0 };
    let mut layers = vec![
        LayerSpec::new(LayerKind::Conv, [3, 3], 2, 1, STEM_FILTERS)
            .with_tensor(TensorRole::Kernel, fill.kernel(9 * STEM_FILTERS)),
        batch_norm(STEM_FILTERS, cfg.bn_scale),
        relu(STEM_FILTERS),
    ];
    let mut c = STEM_FILTERS;
    for &(filters, stride) in &BLOCKS {
        layers.push(
            LayerSpec::new(LayerKind::DepthwiseConv, [3, 3], stride as u8, c, c)
                .with_tensor(TensorRole::Kernel, fill.kernel(9 * c)),
        );
        layers.push(batch_norm(c, cfg.bn_scale));
        layers.push(relu(c));
        layers.push(
            LayerSpec::new(LayerKind::Conv, [1, 1], 1, c, filters)
                .with_tensor(TensorRole::Kernel, fill.kernel(c * filters)),
        );
        layers.push(batch_norm(filters, cfg.bn_scale));
        layers.push(relu(filters));
        c = filters;
    }
    layers.push(LayerSpec::new(LayerKind::GlobalAvgPool, [1, 1], 1, c, c));
    layers.push(
        LayerSpec::new(LayerKind::Dense, [1, 1], 1, c, cfg.class_count)
            .with_tensor(TensorRole::Kernel, fill.kernel(c * cfg.class_count))
            .with_tensor(TensorRole::Bias, vec![0.0; cfg.class_count]),
    );
    layers.push(LayerSpec::new(
        LayerKind::Sigmoid,
        [1, 1],
        1,
        cfg.class_count,
        cfg.class_count,
    ));
    let m = ModelWeights {
        layers,
        class_count: cfg.class_count,
        dtype: DType::F32,
        bn_epsilon: BN_EPSILON,
        labels: cfg.labels.clone(),
    };
    m.validate()?;
    Ok(m)
}

pub fn count_parameters(m: &ModelWeights) -> usize {
    m.parameter_count()
}

impl ModelWeights {
    fn head_index(&self) -> Result<usize> {
        self.layers
            .iter()
            .rposition(|l| l.kind == LayerKind::Dense)
            .ok_or_else(|| Error::Shape("model has no dense head".into()))
    }

    /// Final dense layer as `(kernel in x out, bias)` at f32.
    pub fn head(&self) -> Result<(Vec<f32>, Vec<f32>)> {
        let l = &self.layers[self.head_index()?];
        let get = |r| l.tensor(r).map(TensorData::to_f32).unwrap_or_default();
        Ok((get(TensorRole::Kernel), get(TensorRole::Bias)))
    }

    /// Replaces the final dense layer, keeping the model's storage dtype.
    pub fn set_head(&mut self, kernel: &[f32], bias: &[f32]) -> Result<()> {
        let i = self.head_index()?;
        let dtype = self.dtype;
        let l = &mut self.layers[i];
        if kernel.len() != (l.in_channels * l.out_channels) as usize || bias.len() != l.out_channels as usize {
            return Err(Error::Shape(format!(
                "head expects {}x{} kernel and {} biases",
                l.in_channels, l.out_channels, l.out_channels
            )));
        }
        l.set_tensor(TensorRole::Kernel, TensorData::F32(kernel.to_vec()).converted(dtype));
        l.set_tensor(TensorRole::Bias, TensorData::F32(bias.to_vec()).converted(dtype));
        Ok(())
    }

    /// Width of the pooled embedding feeding the head.
    pub fn embedding_dim(&self) -> Result<usize> {
        Ok(self.layers[self.head_index()?].in_channels as usize)
    }
}
