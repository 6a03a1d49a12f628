//! Encoder-decoder depth network over a reference image stacked with its
//! cost volume, with training and gradient verification at toy scale.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{build_network, LayerKind, LayerSpec, NetworkGraph, WidthScale};
pub use model::{
    assemble_input, downsample_gt, multiscale_loss, ForwardPass, Gradients, GtPyramid,
    LossOutput, Mode, MultiScalePrediction,
};
pub use tensor::Tensor;
pub use train::{mean_l1_inv, train_toy, Adam, TrainConfig, TrainSample, TrainingLog};
