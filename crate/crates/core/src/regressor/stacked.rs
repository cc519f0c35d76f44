//! Stacked network: image CNN feeding the auto-encoder's decoder.
//!
//! [`stack_decoder`] copies the decoder half of a trained auto-encoder onto a
//! latent-regressing CNN, materializing the tied weights as explicit dense
//! layers (`W^T` per stage) so the whole stack is one feed-forward network.
//! [`finetune_stacked`] then trains the combined parameters end to end on
//! image/pose pairs.

use super::cnn::{self, CnnTrace, CropPolicy, DenseLayer, ForwardMode, ImageEncoderParams};
use super::train::{fit_model, record_inputs, RegTrainConfig, FIT};
use crate::autoencoder::{AutoEncoderParams, Pose};
use crate::error::{Error, Result};
use crate::eval::mean_mpjpe;
use crate::numerics::{dense_backward, dense_forward, relu, relu_backward, RngStream, Tensor};
use crate::synthdata::{DatasetRecord, GrayImage};
use crate::trainlog::TrainLog;

/// CNN image encoder followed by a chain of dense decoder layers.
///
/// Hidden decoder layers apply ReLU; the final layer is linear and its output
/// is a pose vector (3 coordinates per joint).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedNetworkParams {
    encoder: ImageEncoderParams,
    decoder: Vec<DenseLayer>,
}

impl StackedNetworkParams {
    /// Assemble a stacked network, validating that the decoder chain starts
    /// at the CNN output dimension and ends at a pose dimension.
    pub fn from_parts(
        encoder: ImageEncoderParams,
        decoder: Vec<DenseLayer>,
    ) -> Result<StackedNetworkParams> {
        let op = "stacked_network";
        if decoder.is_empty() {
            return Err(Error::Parameter {
                op,
                name: "decoder",
                detail: "need at least one decoder layer".into(),
            });
        }
        let mut current = encoder.output_dim();
        for (i, layer) in decoder.iter().enumerate() {
            let (out, inp) = layer.weights.dims2(op)?;
            if inp != current {
                return Err(Error::Dimension {
                    op,
                    detail: format!(
                        "decoder layer {i} expects input {inp} but receives {current}"
                    ),
                });
            }
            if layer.bias.shape() != [out] {
                return Err(Error::Dimension {
                    op,
                    detail: format!(
                        "decoder layer {i} bias shape {:?} does not match output {out}",
                        layer.bias.shape()
                    ),
                });
            }
            current = out;
        }
        if current == 0 || current % 3 != 0 {
            return Err(Error::Dimension {
                op,
                detail: format!("final decoder output {current} is not a pose dimension (3 per joint)"),
            });
        }
        Ok(StackedNetworkParams { encoder, decoder })
    }

    /// The CNN image encoder.
    pub fn encoder(&self) -> &ImageEncoderParams {
        &self.encoder
    }

    /// The dense decoder chain.
    pub fn decoder_layers(&self) -> &[DenseLayer] {
        &self.decoder
    }

    /// Dimension of the code passed from the CNN into the decoder.
    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Output pose dimension (3 coordinates per joint).
    pub fn output_dim(&self) -> usize {
        self.decoder.last().map(|l| l.weights.shape()[0]).unwrap_or(0)
    }

    /// All trainable tensors: encoder tensors first, then each decoder
    /// layer's weights and bias in forward order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.tensors();
        for layer in &self.decoder {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        out
    }

    /// Mutable view of [`tensors`](Self::tensors) in the same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        for layer in &mut self.decoder {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out
    }
}

/// Saved activations from a stacked forward pass.
pub(crate) struct StackedTrace {
    cnn: CnnTrace,
    decoder_inputs: Vec<Tensor>,
    decoder_pre: Vec<Tensor>,
}

pub(crate) fn forward_trace(
    params: &StackedNetworkParams,
    input: &Tensor,
    mode: ForwardMode<'_>,
) -> Result<(Tensor, StackedTrace)> {
    let (code, cnn_trace) = cnn::forward_trace(&params.encoder, input, mode)?;
    let last = params.decoder.len() - 1;
    let mut decoder_inputs = Vec::with_capacity(params.decoder.len());
    let mut decoder_pre = Vec::with_capacity(params.decoder.len());
    let mut x = code;
    for (s, layer) in params.decoder.iter().enumerate() {
        let z = dense_forward(&layer.weights, &layer.bias, &x)?;
        decoder_inputs.push(x);
        x = if s < last { relu(&z) } else { z.clone() };
        decoder_pre.push(z);
    }
    Ok((x, StackedTrace { cnn: cnn_trace, decoder_inputs, decoder_pre }))
}

/// Gradients in the same order as [`StackedNetworkParams::tensors`].
pub(crate) fn backward(
    params: &StackedNetworkParams,
    trace: &StackedTrace,
    upstream: &Tensor,
) -> Result<Vec<Tensor>> {
    let last = params.decoder.len() - 1;
    let mut g = upstream.clone();
    let mut decoder_rev = Vec::with_capacity(params.decoder.len());
    for (s, layer) in params.decoder.iter().enumerate().rev() {
        if s < last {
            g = relu_backward(&trace.decoder_pre[s], &g)?;
        }
        let grads = dense_backward(&layer.weights, &trace.decoder_inputs[s], &g)?;
        decoder_rev.push((grads.weights, grads.bias));
        g = grads.input;
    }
    let mut out = cnn::backward(&params.encoder, &trace.cnn, &g)?;
    for (w, b) in decoder_rev.into_iter().rev() {
        out.push(w);
        out.push(b);
    }
    Ok(out)
}

pub(crate) fn train_sample_grads(
    params: &StackedNetworkParams,
    image: &Tensor,
    target: &[f64],
    dropout_p: f64,
    augment: bool,
    dropout_rng: &mut RngStream,
    crop_rng: &mut RngStream,
) -> Result<(f64, Vec<Tensor>)> {
    let policy = if augment { CropPolicy::Random(crop_rng) } else { CropPolicy::Center };
    let input = cnn::prepare_input(params.encoder.arch().input_size, image, policy)?;
    let mode = ForwardMode::Train { dropout_p, rng: dropout_rng };
    let (output, trace) = forward_trace(params, &input, mode)?;
    let (loss, upstream) = cnn::squared_loss(&output, target)?;
    let grads = backward(params, &trace, &upstream)?;
    Ok((loss, grads))
}

/// Copy a trained auto-encoder's decoder onto a latent-regressing CNN.
///
/// Each auto-encoder stage contributes one dense layer with weights `W^T`
/// (the tied decode direction) and its decode bias, in reverse stage order.
/// The resulting stack's raw forward pass reproduces the auto-encoder's
/// decode of the CNN output exactly; the auto-encoder itself is not modified.
pub fn stack_decoder(
    cnn: ImageEncoderParams,
    ae: &AutoEncoderParams,
) -> Result<StackedNetworkParams> {
    if cnn.output_dim() != ae.latent_dim() {
        return Err(Error::Dimension {
            op: "stack_decoder",
            detail: format!(
                "CNN output dimension {} vs auto-encoder latent dimension {}",
                cnn.output_dim(),
                ae.latent_dim()
            ),
        });
    }
    let decoder: Vec<DenseLayer> = ae
        .layers()
        .iter()
        .rev()
        .map(|layer| {
            Ok(DenseLayer {
                weights: layer.weight.transposed()?,
                bias: layer.decode_bias.clone(),
            })
        })
        .collect::<Result<_>>()?;
    StackedNetworkParams::from_parts(cnn, decoder)
}

/// Predict a root-centered pose from an image (center crop, no dropout).
pub fn predict_pose(params: &StackedNetworkParams, image: &GrayImage) -> Result<Pose> {
    let tensor = cnn::image_to_tensor(image)?;
    let input =
        cnn::prepare_input(params.encoder.arch().input_size, &tensor, CropPolicy::Center)?;
    let (output, _) = forward_trace(params, &input, ForwardMode::Infer)?;
    let mut pose = Pose::new(output.into_vec())?;
    pose.zero_root();
    Ok(pose)
}

/// Inference-mode squared loss and parameter gradients for one image/pose
/// pair, in [`StackedNetworkParams::tensors`] order.  Meant for gradient
/// verification; training uses dropout internally.
pub fn stacked_loss_grads(
    params: &StackedNetworkParams,
    image: &GrayImage,
    target: &Pose,
) -> Result<(f64, Vec<Tensor>)> {
    let tensor = cnn::image_to_tensor(image)?;
    let input =
        cnn::prepare_input(params.encoder.arch().input_size, &tensor, CropPolicy::Center)?;
    let (output, trace) = forward_trace(params, &input, ForwardMode::Infer)?;
    let (loss, upstream) = cnn::squared_loss(&output, target.as_slice())?;
    let grads = backward(params, &trace, &upstream)?;
    Ok((loss, grads))
}

/// Fine-tune a stacked network end to end on image/pose pairs.
///
/// Uses ADAM on the squared pose loss with dropout in the CNN's dense
/// layers.  The returned parameters are the best checkpoint by mean
/// per-joint error over the training records (computed with
/// [`predict_pose`], so the entry state participates and the result is
/// never worse than the input by that measure).  With `epochs == 0` the
/// input parameters are returned unchanged.
pub fn finetune_stacked(
    params: StackedNetworkParams,
    records: &[DatasetRecord],
    config: &RegTrainConfig,
) -> Result<(StackedNetworkParams, TrainLog)> {
    let op = "finetune_stacked";
    let (images, poses) = record_inputs(op, records)?;
    let dim = params.output_dim();
    if poses.iter().any(|p| p.dim() != dim) {
        return Err(Error::Dimension {
            op,
            detail: format!("records contain poses that do not match network output {dim}"),
        });
    }
    let targets: Vec<Vec<f64>> = poses.iter().map(|p| p.as_slice().to_vec()).collect();
    let truths = poses;
    let metric = |model: &StackedNetworkParams| -> Result<f64> {
        let predictions: Vec<Pose> = records
            .iter()
            .map(|r| predict_pose(model, &r.image))
            .collect::<Result<_>>()?;
        mean_mpjpe(&predictions, &truths)
    };
    let mut rng = RngStream::new(config.seed).substream(FIT);
    fit_model(
        params,
        &images,
        &targets,
        config,
        &mut rng,
        |model| model.tensors_mut(),
        |model, image, target, dropout_rng, crop_rng| {
            train_sample_grads(
                model,
                image,
                target,
                config.dropout,
                config.augment,
                dropout_rng,
                crop_rng,
            )
        },
        Some(&metric),
    )
}
