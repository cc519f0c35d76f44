//! poselift-core: structured 3D pose regression from images.
//!
//! The toolkit reproduces a three-stage pipeline: an overcomplete denoising
//! contractive auto-encoder learns a latent pose representation, a small CNN
//! regresses images into that latent space, and stacking the decoder on top
//! of the CNN yields an image-to-pose network that can be fine-tuned end to
//! end. Baselines (direct regression, an extra fully connected layer, PCA
//! coefficient regression), a synthetic articulated-skeleton dataset
//! generator, and structure-preservation metrics round out the toolkit.
//!
//! Everything runs on `f64`, all randomness flows through seedable
//! [`numerics::RngStream`]s, and artifacts serialize to documented flat
//! formats, so a fixed seed reproduces results bit for bit.

pub mod autoencoder;
pub mod error;
pub mod eval;
pub mod model_io;
pub mod numerics;
pub mod pgm;
pub mod pipeline;
pub mod regressor;
pub mod synthdata;
pub mod trainlog;

pub use autoencoder::Pose;
pub use error::{Error, Result};
pub use numerics::{RngStream, Tensor};
