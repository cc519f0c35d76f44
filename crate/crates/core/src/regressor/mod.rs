//! Image-to-pose regression: the pipeline's second and third stages.
//!
//! A small convolutional network ([`cnn`]) maps a rendered image to the
//! auto-encoder's latent code ([`train_latent_regression`]); the trained
//! decoder is then copied on top of it ([`stack_decoder`]) and the whole
//! stack is fine-tuned end to end on image/pose pairs
//! ([`finetune_stacked`]).  The module also provides the ablation
//! baselines: direct pose regression ([`train_direct_baseline`]), the same
//! with one extra dense layer ([`train_extrafc_baseline`]), and regression
//! to PCA coefficients ([`train_pca_baseline`]).
//!
//! Every trainer is deterministic given its config seed; see each
//! function's notes for the substream layout.

mod cnn;
mod pca;
mod stacked;
mod train;

pub use cnn::{cnn_forward, cnn_loss_grads, CnnArchitecture, ConvLayer, DenseLayer, ImageEncoderParams};
pub use pca::{fit_pca, stack_pca, PcaBasis};
pub use stacked::{
    finetune_stacked, predict_pose, stack_decoder, stacked_loss_grads, StackedNetworkParams,
};
pub use train::{
    predict_direct, train_direct_baseline, train_extrafc_baseline, train_latent_regression,
    train_pca_baseline, RegTrainConfig,
};
