//! Overcomplete denoising contractive auto-encoder for 3D poses.
//!
//! The encoder is a stack of ReLU layers; the decoder reuses each layer's
//! weights transposed (tied weights) with its own bias, applying ReLU
//! between decode steps and staying linear on the final output. Training
//! corrupts inputs with Gaussian noise, reconstructs against the clean
//! target, and adds a contractive penalty `lambda * ||J(y)||_F^2`, where `J`
//! is the encoder Jacobian evaluated at the clean input:
//!
//! ```text
//! loss = sum_i ( ||y_i - f_ae(corrupt(y_i))||^2 + lambda ||J(y_i)||_F^2 )
//! ```
//!
//! The latent layer is wider than the pose vector (overcomplete); combined
//! with the denoising objective this produces sparse non-negative codes.

pub mod pose;
pub(crate) mod stack;
mod train;

pub use pose::Pose;
pub use train::{ae_eval_loss, finetune_ae, pretrain_layerwise, pretrain_layerwise_observed};

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, RngStream, Tensor};

/// One tied layer: `weight` is `[out_dim, in_dim]`, used as-is by the
/// encoder and transposed by the decoder; each direction has its own bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AeLayer {
    pub weight: Tensor,
    pub encode_bias: Tensor,
    pub decode_bias: Tensor,
}

impl AeLayer {
    /// Glorot-uniform weights, zero biases.
    pub(crate) fn init(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> AeLayer {
        AeLayer {
            weight: glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng)
                .expect("positive dimensions"),
            encode_bias: Tensor::zeros(&[out_dim]),
            decode_bias: Tensor::zeros(&[in_dim]),
        }
    }

    pub fn new(weight: Tensor, encode_bias: Tensor, decode_bias: Tensor) -> Result<AeLayer> {
        let (out_dim, in_dim) = weight.dims2("ae_layer")?;
        if encode_bias.shape() != [out_dim] || decode_bias.shape() != [in_dim] {
            return Err(Error::Dimension {
                op: "ae_layer",
                detail: format!(
                    "weight [{out_dim}, {in_dim}] vs encode bias {:?} / decode bias {:?}",
                    encode_bias.shape(),
                    decode_bias.shape()
                ),
            });
        }
        Ok(AeLayer {
            weight,
            encode_bias,
            decode_bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

fn check_layer_sizes(op: &'static str, input_dim: usize, sizes: &[usize]) -> Result<()> {
    if input_dim == 0 || input_dim % 3 != 0 {
        return Err(Error::Parameter {
            op,
            name: "input_dim",
            detail: format!("pose dimension must be a positive multiple of 3, got {input_dim}"),
        });
    }
    if sizes.is_empty() {
        return Err(Error::Parameter {
            op,
            name: "layer_sizes",
            detail: "at least one encode layer is required".into(),
        });
    }
    if let Some(zero) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Parameter {
            op,
            name: "layer_sizes",
            detail: format!("layer {zero} has width 0"),
        });
    }
    let middle = *sizes.last().unwrap();
    if middle <= input_dim {
        return Err(Error::Parameter {
            op,
            name: "layer_sizes",
            detail: format!(
                "middle layer width {middle} must exceed the pose dimension {input_dim}: \
                 the latent representation is overcomplete"
            ),
        });
    }
    Ok(())
}

/// Parameters of the full auto-encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoderParams {
    layers: Vec<AeLayer>,
}

impl AutoEncoderParams {
    /// Fresh Glorot-initialized parameters. `layer_sizes` lists encoder
    /// widths from the pose side inward; the last entry (the latent width)
    /// must exceed `input_dim`.
    pub fn init(input_dim: usize, layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        check_layer_sizes("autoencoder_init", input_dim, layer_sizes)?;
        let mut layers = Vec::with_capacity(layer_sizes.len());
        let mut in_dim = input_dim;
        for &out_dim in layer_sizes {
            layers.push(AeLayer::init(in_dim, out_dim, rng));
            in_dim = out_dim;
        }
        Ok(AutoEncoderParams { layers })
    }

    /// Assemble from pre-built layers, validating the dimension chain and
    /// overcompleteness.
    pub fn from_layers(layers: Vec<AeLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter {
                op: "autoencoder",
                name: "layers",
                detail: "at least one encode layer is required".into(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension {
                    op: "autoencoder",
                    detail: format!(
                        "layer output {} does not chain into next layer input {}",
                        pair[0].output_dim(),
                        pair[1].input_dim()
                    ),
                });
            }
        }
        let sizes: Vec<usize> = layers.iter().map(AeLayer::output_dim).collect();
        check_layer_sizes("autoencoder", layers[0].input_dim(), &sizes)?;
        Ok(AutoEncoderParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[AeLayer] {
        &self.layers
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut Vec<AeLayer> {
        &mut self.layers
    }
}

/// Non-negative latent activations produced by [`encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<LatentCode> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "latent_code" });
        }
        if let Some(neg) = values.iter().find(|&&v| v < 0.0) {
            return Err(Error::Domain {
                op: "latent_code",
                detail: format!("entries must be non-negative, found {neg}"),
            });
        }
        Ok(LatentCode { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Training settings for the auto-encoder stages.
///
/// `noise_sigmas` holds one corruption level per encode layer: greedy
/// pretraining corrupts stage `j`'s inputs with `noise_sigmas[j]`, and
/// whole-network passes ([`ae_loss`], [`finetune_ae`]) corrupt the pose
/// input with `noise_sigmas[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainConfig {
    pub lambda: f64,
    pub noise_sigmas: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl AeTrainConfig {
    pub fn validate(&self, layer_count: usize) -> Result<()> {
        let param = |name: &'static str, detail: String| Error::Parameter {
            op: "ae_train_config",
            name,
            detail,
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(param("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.noise_sigmas.len() != layer_count {
            return Err(param(
                "noise_sigmas",
                format!(
                    "need one sigma per encode layer ({layer_count}), got {}",
                    self.noise_sigmas.len()
                ),
            ));
        }
        if let Some(bad) = self
            .noise_sigmas
            .iter()
            .find(|s| !(**s >= 0.0 && s.is_finite()))
        {
            return Err(param("noise_sigmas", format!("must be >= 0, got {bad}")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(param(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(param("batch_size", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gradients of the loss with respect to one layer's parameters.
#[derive(Debug, Clone)]
pub struct AeLayerGrads {
    pub weight: Tensor,
    pub encode_bias: Tensor,
    pub decode_bias: Tensor,
}

/// Gradients for the whole stack, shaped exactly like the parameters.
#[derive(Debug, Clone)]
pub struct AeGradients {
    pub layers: Vec<AeLayerGrads>,
}

impl AeGradients {
    pub fn zeros_like(layers: &[AeLayer]) -> AeGradients {
        AeGradients {
            layers: layers
                .iter()
                .map(|l| AeLayerGrads {
                    weight: Tensor::zeros(l.weight.shape()),
                    encode_bias: Tensor::zeros(l.encode_bias.shape()),
                    decode_bias: Tensor::zeros(l.decode_bias.shape()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.scale(factor);
            l.encode_bias.scale(factor);
            l.decode_bias.scale(factor);
        }
    }
}

// --- operations -----------------------------------------------------------

/// Add isotropic Gaussian noise (`sigma` in millimeters) to every
/// coordinate, then pin the root joint back onto the origin.
pub fn corrupt(pose: &Pose, sigma: f64, rng: &mut RngStream) -> Result<Pose> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter {
            op: "corrupt",
            name: "sigma",
            detail: format!("noise level must be >= 0, got {sigma}"),
        });
    }
    let noisy = stack::corrupt_vec(pose.as_slice(), sigma, 3, rng);
    Pose::new(noisy)
}

fn check_pose_dim(op: &'static str, params: &AutoEncoderParams, pose: &Pose) -> Result<()> {
    if pose.dim() != params.input_dim() {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "auto-encoder expects pose dimension {}, got {}",
                params.input_dim(),
                pose.dim()
            ),
        });
    }
    Ok(())
}

/// Run the encoder; the result is non-negative because every encode layer
/// ends in ReLU.
pub fn encode(params: &AutoEncoderParams, pose: &Pose) -> Result<LatentCode> {
    check_pose_dim("encode", params, pose)?;
    Ok(LatentCode {
        values: stack::encode_vec(params.layers(), pose.as_slice()),
    })
}

/// Run the tied decoder. The output is the decoder's raw affine result; its
/// root is not re-zeroed here.
pub fn decode(params: &AutoEncoderParams, code: &LatentCode) -> Result<Pose> {
    if code.len() != params.latent_dim() {
        return Err(Error::Dimension {
            op: "decode",
            detail: format!(
                "auto-encoder latent dimension {}, got code of length {}",
                params.latent_dim(),
                code.len()
            ),
        });
    }
    Pose::new(stack::decode_vec(params.layers(), code.values()))
}

/// `decode(encode(pose))`.
pub fn reconstruct(params: &AutoEncoderParams, pose: &Pose) -> Result<Pose> {
    check_pose_dim("reconstruct", params, pose)?;
    Pose::new(stack::reconstruct_vec(params.layers(), pose.as_slice()))
}

/// Squared Frobenius norm of the encoder Jacobian at `pose`, with its exact
/// gradient contribution. Bias gradients are zero: the ReLU masks through
/// which biases act are piecewise constant.
pub fn contractive_penalty(params: &AutoEncoderParams, pose: &Pose) -> Result<(f64, AeGradients)> {
    check_pose_dim("contractive_penalty", params, pose)?;
    let (value, weight_grads) = stack::penalty_with_weight_grads(params.layers(), pose.as_slice());
    let mut grads = AeGradients::zeros_like(params.layers());
    for (slot, g) in grads.layers.iter_mut().zip(weight_grads) {
        slot.weight = g;
    }
    Ok((value, grads))
}

/// Denoising contractive loss over a batch of clean poses, summed across
/// samples, together with exact gradients of that sum. Corruption uses
/// `config.noise_sigmas[0]`; the penalty is evaluated at the clean inputs.
pub fn ae_loss(
    params: &AutoEncoderParams,
    batch: &[Pose],
    rng: &mut RngStream,
    config: &AeTrainConfig,
) -> Result<(f64, AeGradients)> {
    config.validate(params.layer_count())?;
    if batch.is_empty() {
        return Err(Error::Parameter {
            op: "ae_loss",
            name: "batch",
            detail: "batch must contain at least one pose".into(),
        });
    }
    for pose in batch {
        check_pose_dim("ae_loss", params, pose)?;
    }
    let views: Vec<&[f64]> = batch.iter().map(Pose::as_slice).collect();
    let (loss, grads) = stack::batch_loss(
        params.layers(),
        &views,
        config.noise_sigmas[0],
        config.lambda,
        3,
        rng,
    );
    Ok((loss, grads))
}
