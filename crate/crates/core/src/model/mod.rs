//! The classifier: kernels, architecture, weight file and forward pass.

mod arch;
pub mod kernels;
mod network;
pub mod weights;

pub use arch::{count_parameters, mobilenet, ArchConfig, Init, BLOCKS, BN_EPSILON, EMBEDDING_DIM, INIT_STD, STEM_FILTERS};
pub use kernels::Tensor3;
pub use network::{
    argmax, calibrate_batch_norm, forward_patch, infer_clip, Classifier, Network, NetworkOptions, ScoreVector,
};
pub use weights::{load_weights, save_weights, DType, LayerKind, LayerSpec, ModelWeights, TensorData, TensorRole, WeightsError};
