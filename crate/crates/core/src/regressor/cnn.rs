//! Image-to-vector convolutional regressor.
//!
//! The network is a fixed pipeline: a stack of (convolution, ReLU, 2x2
//! max-pool) blocks, a row-major flatten, a stack of fully connected layers
//! with ReLU (and, in training mode, inverted dropout), and a final linear
//! map whose output is multiplied by a fixed, non-trainable `output_scale`.
//! The scale is set from the target RMS when training starts, which lets the
//! freshly initialized network start in the right order of magnitude when
//! regression targets live on the millimeter scale.
//!
//! The prediction is deliberately unconstrained in sign even when it targets
//! a non-negative latent code: the squared loss pulls it toward the target
//! region, but the final layer stays linear.

use crate::error::{Error, Result};
use crate::numerics::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_mask, glorot_uniform,
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, RngStream, Tensor,
};
use crate::synthdata::GrayImage;

/// Shape of the network, without its parameters. All counts are
/// configurable; the defaults describe the desk-scale network (32x32 gray
/// input, three conv blocks, three hidden dense layers).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnArchitecture {
    /// Side length of the square single-channel input patch.
    pub input_size: usize,
    /// Output channels of each conv block, outermost first.
    pub conv_channels: Vec<usize>,
    /// Square kernel side of each conv block; must pair with `conv_channels`.
    pub conv_kernels: Vec<usize>,
    /// Widths of the hidden dense layers between flatten and the output map.
    pub fc_widths: Vec<usize>,
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        CnnArchitecture {
            input_size: 32,
            conv_channels: vec![8, 16, 32],
            conv_kernels: vec![5, 3, 3],
            fc_widths: vec![128, 128, 64],
        }
    }
}

impl CnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        self.flat_dim().map(|_| ())
    }

    /// Length of the flattened tensor after the last conv block, checking
    /// the whole spatial plan along the way.
    pub fn flat_dim(&self) -> Result<usize> {
        let bad = |name: &'static str, detail: String| Error::Parameter {
            op: "cnn_architecture",
            name,
            detail,
        };
        if self.conv_channels.is_empty() {
            return Err(bad("conv_channels", "need at least one conv block".into()));
        }
        if self.conv_channels.len() != self.conv_kernels.len() {
            return Err(bad(
                "conv_kernels",
                format!(
                    "{} kernel sizes for {} conv blocks",
                    self.conv_kernels.len(),
                    self.conv_channels.len()
                ),
            ));
        }
        if self.fc_widths.is_empty() {
            return Err(bad("fc_widths", "need at least one dense layer".into()));
        }
        if let Some(w) = self
            .conv_channels
            .iter()
            .chain(&self.fc_widths)
            .find(|&&w| w == 0)
        {
            return Err(bad("widths", format!("layer width must be positive, got {w}")));
        }
        let mut side = self.input_size;
        for (i, &k) in self.conv_kernels.iter().enumerate() {
            if k == 0 || k > side {
                return Err(bad(
                    "conv_kernels",
                    format!("conv block {i}: kernel {k} does not fit a {side}x{side} input"),
                ));
            }
            side = (side - k + 1) / 2;
            if side == 0 {
                return Err(bad(
                    "input_size",
                    format!("conv block {i} pools the image away; enlarge the input"),
                ));
            }
        }
        Ok(self.conv_channels[self.conv_channels.len() - 1] * side * side)
    }
}

/// One conv block's parameters: `kernels` is `[out_channels, in_channels,
/// k, k]`, `bias` is `[out_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// One dense layer's parameters: `weights` is `[out_dim, in_dim]`, `bias`
/// is `[out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Full parameter set of the image regressor.
///
/// The trainable tensors are exposed in a fixed canonical order (see
/// [`ImageEncoderParams::tensors`]); the optimizer, the serializer, and the
/// gradient vectors returned by the loss functions all follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoderParams {
    arch: CnnArchitecture,
    conv: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
    output: DenseLayer,
    output_scale: f64,
}

impl ImageEncoderParams {
    /// Glorot-uniform weights, zero biases, `output_scale = 1`. Tensors are
    /// drawn from `rng` in canonical order.
    pub fn init(arch: CnnArchitecture, output_dim: usize, rng: &mut RngStream) -> Result<Self> {
        let flat = arch.flat_dim()?;
        if output_dim == 0 {
            return Err(Error::Parameter {
                op: "image_encoder",
                name: "output_dim",
                detail: "output dimension must be positive".into(),
            });
        }
        let mut conv = Vec::with_capacity(arch.conv_channels.len());
        let mut in_c = 1;
        for (&out_c, &k) in arch.conv_channels.iter().zip(&arch.conv_kernels) {
            let fan = in_c * k * k;
            conv.push(ConvLayer {
                kernels: glorot_uniform(&[out_c, in_c, k, k], fan, out_c * k * k, rng)?,
                bias: Tensor::zeros(&[out_c]),
            });
            in_c = out_c;
        }
        let mut dense = Vec::with_capacity(arch.fc_widths.len());
        let mut in_dim = flat;
        for &w in &arch.fc_widths {
            dense.push(DenseLayer {
                weights: glorot_uniform(&[w, in_dim], in_dim, w, rng)?,
                bias: Tensor::zeros(&[w]),
            });
            in_dim = w;
        }
        let output = DenseLayer {
            weights: glorot_uniform(&[output_dim, in_dim], in_dim, output_dim, rng)?,
            bias: Tensor::zeros(&[output_dim]),
        };
        Ok(ImageEncoderParams {
            arch,
            conv,
            dense,
            output,
            output_scale: 1.0,
        })
    }

    /// Reassemble a parameter set from its pieces, re-checking every shape
    /// against the architecture.
    pub fn from_parts(
        arch: CnnArchitecture,
        conv: Vec<ConvLayer>,
        dense: Vec<DenseLayer>,
        output: DenseLayer,
        output_scale: f64,
    ) -> Result<Self> {
        let flat = arch.flat_dim()?;
        let mismatch = |detail: String| Error::Dimension {
            op: "image_encoder",
            detail,
        };
        if conv.len() != arch.conv_channels.len() {
            return Err(mismatch(format!(
                "{} conv layers for {} conv blocks",
                conv.len(),
                arch.conv_channels.len()
            )));
        }
        let mut in_c = 1;
        for (i, (layer, (&out_c, &k))) in conv
            .iter()
            .zip(arch.conv_channels.iter().zip(&arch.conv_kernels))
            .enumerate()
        {
            let want = [out_c, in_c, k, k];
            if layer.kernels.shape() != want || layer.bias.shape() != [out_c] {
                return Err(mismatch(format!(
                    "conv block {i}: kernels {:?} / bias {:?} vs expected {want:?} / [{out_c}]",
                    layer.kernels.shape(),
                    layer.bias.shape()
                )));
            }
            in_c = out_c;
        }
        if dense.len() != arch.fc_widths.len() {
            return Err(mismatch(format!(
                "{} dense layers for {} configured widths",
                dense.len(),
                arch.fc_widths.len()
            )));
        }
        let mut in_dim = flat;
        for (i, (layer, &w)) in dense.iter().zip(&arch.fc_widths).enumerate() {
            if layer.weights.shape() != [w, in_dim] || layer.bias.shape() != [w] {
                return Err(mismatch(format!(
                    "dense layer {i}: weights {:?} / bias {:?} vs expected [{w}, {in_dim}] / [{w}]",
                    layer.weights.shape(),
                    layer.bias.shape()
                )));
            }
            in_dim = w;
        }
        let (out_dim, out_in) = output.weights.dims2("image_encoder")?;
        if out_in != in_dim || output.bias.shape() != [out_dim] || out_dim == 0 {
            return Err(mismatch(format!(
                "output map weights {:?} / bias {:?} vs expected [_, {in_dim}]",
                output.weights.shape(),
                output.bias.shape()
            )));
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::Parameter {
                op: "image_encoder",
                name: "output_scale",
                detail: format!("must be positive and finite, got {output_scale}"),
            });
        }
        Ok(ImageEncoderParams {
            arch,
            conv,
            dense,
            output,
            output_scale,
        })
    }

    pub fn arch(&self) -> &CnnArchitecture {
        &self.arch
    }

    pub fn conv_layers(&self) -> &[ConvLayer] {
        &self.conv
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    pub fn output_dim(&self) -> usize {
        self.output.weights.shape()[0]
    }

    /// Fixed scalar multiplying the final linear map. Not a trainable
    /// parameter: training sets it once from the target RMS.
    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub(crate) fn set_output_scale(&mut self, scale: f64) {
        self.output_scale = scale;
    }

    /// Trainable tensors in canonical order: for each conv block its kernels
    /// then bias, for each dense layer its weights then bias, then the
    /// output map's weights and bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len() + 1));
        for layer in &self.conv {
            out.push(&layer.kernels);
            out.push(&layer.bias);
        }
        for layer in &self.dense {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        out.push(&self.output.weights);
        out.push(&self.output.bias);
        out
    }

    /// Mutable view of [`ImageEncoderParams::tensors`], same order. Shapes
    /// cannot change through this view, only entries.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len() + 1));
        for layer in &mut self.conv {
            out.push(&mut layer.kernels);
            out.push(&mut layer.bias);
        }
        for layer in &mut self.dense {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.bias);
        out
    }
}

// --- forward / backward ----------------------------------------------------

/// Whether a forward pass draws dropout masks.
pub(crate) enum ForwardMode<'a> {
    Infer,
    Train {
        dropout_p: f64,
        rng: &'a mut RngStream,
    },
}

/// Intermediates needed by the backward pass, one forward call's worth.
pub(crate) struct CnnTrace {
    conv_inputs: Vec<Tensor>,
    conv_pre: Vec<Tensor>,
    pool_argmax: Vec<Vec<usize>>,
    flat_shape: Vec<usize>,
    dense_inputs: Vec<Tensor>,
    dense_pre: Vec<Tensor>,
    dropout_masks: Vec<Vec<f64>>,
    output_input: Tensor,
}

/// How to reduce an oversized image to the network's input patch.
pub(crate) enum CropPolicy<'a> {
    Center,
    Random(&'a mut RngStream),
}

pub(crate) fn image_to_tensor(image: &GrayImage) -> Result<Tensor> {
    let s = image.size();
    Tensor::from_vec(&[1, s, s], image.as_slice().to_vec())
}

/// Cut an `input_size` square patch out of `image`. Equal sizes pass the
/// image through and consume no randomness; larger images are cropped at
/// the center or at a random offset; smaller images are rejected.
pub(crate) fn prepare_input(
    input_size: usize,
    image: &Tensor,
    policy: CropPolicy,
) -> Result<Tensor> {
    let (c, h, w) = image.dims3("cnn_input")?;
    if h < input_size || w < input_size {
        return Err(Error::Dimension {
            op: "cnn_input",
            detail: format!("image {h}x{w} is smaller than the network input {input_size}x{input_size}"),
        });
    }
    if h == input_size && w == input_size {
        return Ok(image.clone());
    }
    let (r0, c0) = match policy {
        CropPolicy::Center => ((h - input_size) / 2, (w - input_size) / 2),
        CropPolicy::Random(rng) => {
            let mut pick = |slack: usize| if slack == 0 { 0 } else { rng.index(slack + 1) };
            let r0 = pick(h - input_size);
            let c0 = pick(w - input_size);
            (r0, c0)
        }
    };
    let x = image.as_slice();
    let mut out = Vec::with_capacity(c * input_size * input_size);
    for ch in 0..c {
        for i in 0..input_size {
            let base = (ch * h + r0 + i) * w + c0;
            out.extend_from_slice(&x[base..base + input_size]);
        }
    }
    Tensor::from_vec(&[c, input_size, input_size], out)
}

/// One forward pass over a prepared `[1, input_size, input_size]` patch.
/// Returns the (scaled) output and the trace for the backward pass.
/// Training and inference run the identical code path; they differ only in
/// the dropout masks applied after each hidden dense layer.
pub(crate) fn forward_trace(
    params: &ImageEncoderParams,
    input: &Tensor,
    mut mode: ForwardMode<'_>,
) -> Result<(Tensor, CnnTrace)> {
    let mut conv_inputs = Vec::with_capacity(params.conv.len());
    let mut conv_pre = Vec::with_capacity(params.conv.len());
    let mut pool_argmax = Vec::with_capacity(params.conv.len());
    let mut x = input.clone();
    for layer in &params.conv {
        let z = conv2d_forward(&x, &layer.kernels, &layer.bias)?;
        let (pooled, argmax) = maxpool2x2(&relu(&z))?;
        conv_inputs.push(x);
        conv_pre.push(z);
        pool_argmax.push(argmax);
        x = pooled;
    }
    let flat_shape = x.shape().to_vec();
    let mut v = Tensor::from_vec(&[x.len()], x.into_vec())?;

    let mut dense_inputs = Vec::with_capacity(params.dense.len());
    let mut dense_pre = Vec::with_capacity(params.dense.len());
    let mut dropout_masks = Vec::with_capacity(params.dense.len());
    for layer in &params.dense {
        let z = dense_forward(&layer.weights, &layer.bias, &v)?;
        let mut a = relu(&z);
        let mask = match &mut mode {
            ForwardMode::Train { dropout_p, rng } => dropout_mask(a.len(), *dropout_p, rng)?,
            ForwardMode::Infer => vec![1.0; a.len()],
        };
        for (value, m) in a.as_mut_slice().iter_mut().zip(&mask) {
            *value *= m;
        }
        dense_inputs.push(v);
        dense_pre.push(z);
        dropout_masks.push(mask);
        v = a;
    }

    let output_input = v;
    let mut y = dense_forward(&params.output.weights, &params.output.bias, &output_input)?;
    y.scale(params.output_scale);
    let trace = CnnTrace {
        conv_inputs,
        conv_pre,
        pool_argmax,
        flat_shape,
        dense_inputs,
        dense_pre,
        dropout_masks,
        output_input,
    };
    Ok((y, trace))
}

/// Exact gradients of a scalar loss with respect to every trainable tensor,
/// given `upstream = dL/d(output)`. Gradients come back in canonical tensor
/// order.
pub(crate) fn backward(
    params: &ImageEncoderParams,
    trace: &CnnTrace,
    upstream: &Tensor,
) -> Result<Vec<Tensor>> {
    // Through the fixed output scale: y = s * (W_out u + b_out).
    let mut g = upstream.clone();
    g.scale(params.output_scale);
    let out_grads = dense_backward(&params.output.weights, &trace.output_input, &g)?;
    let mut g = out_grads.input;

    let mut dense_rev: Vec<(Tensor, Tensor)> = Vec::with_capacity(params.dense.len());
    for (j, layer) in params.dense.iter().enumerate().rev() {
        for (value, m) in g.as_mut_slice().iter_mut().zip(&trace.dropout_masks[j]) {
            *value *= m;
        }
        let gz = relu_backward(&trace.dense_pre[j], &g)?;
        let grads = dense_backward(&layer.weights, &trace.dense_inputs[j], &gz)?;
        dense_rev.push((grads.weights, grads.bias));
        g = grads.input;
    }

    let mut t = Tensor::from_vec(&trace.flat_shape, g.into_vec())?;
    let mut conv_rev: Vec<(Tensor, Tensor)> = Vec::with_capacity(params.conv.len());
    for (i, layer) in params.conv.iter().enumerate().rev() {
        let unpooled =
            maxpool2x2_backward(trace.conv_pre[i].shape(), &trace.pool_argmax[i], &t)?;
        let gz = relu_backward(&trace.conv_pre[i], &unpooled)?;
        let grads = conv2d_backward(&trace.conv_inputs[i], &layer.kernels, &gz)?;
        conv_rev.push((grads.kernels, grads.bias));
        t = grads.input;
    }

    let mut out = Vec::with_capacity(2 * (params.conv.len() + params.dense.len() + 1));
    for (k, b) in conv_rev.into_iter().rev() {
        out.push(k);
        out.push(b);
    }
    for (w, b) in dense_rev.into_iter().rev() {
        out.push(w);
        out.push(b);
    }
    out.push(out_grads.weights);
    out.push(out_grads.bias);
    Ok(out)
}

/// Squared-error loss `||output - target||^2` and its output gradient.
pub(crate) fn squared_loss(output: &Tensor, target: &[f64]) -> Result<(f64, Tensor)> {
    if output.len() != target.len() {
        return Err(Error::Dimension {
            op: "regression_loss",
            detail: format!(
                "prediction length {} vs target length {}",
                output.len(),
                target.len()
            ),
        });
    }
    let mut loss = 0.0;
    let mut upstream = vec![0.0; target.len()];
    for (u, (&y, &t)) in upstream.iter_mut().zip(output.as_slice().iter().zip(target)) {
        let d = y - t;
        loss += d * d;
        *u = 2.0 * d;
    }
    Ok((loss, Tensor::from_vec(&[target.len()], upstream)?))
}

/// Training-mode loss and gradients for one sample: crop (random when
/// `augment` is set), forward with dropout, squared loss against `target`.
pub(crate) fn train_sample_grads(
    params: &ImageEncoderParams,
    image: &Tensor,
    target: &[f64],
    dropout_p: f64,
    augment: bool,
    dropout_rng: &mut RngStream,
    crop_rng: &mut RngStream,
) -> Result<(f64, Vec<Tensor>)> {
    let policy = if augment {
        CropPolicy::Random(crop_rng)
    } else {
        CropPolicy::Center
    };
    let input = prepare_input(params.arch.input_size, image, policy)?;
    let (y, trace) = forward_trace(
        params,
        &input,
        ForwardMode::Train {
            dropout_p,
            rng: dropout_rng,
        },
    )?;
    let (loss, upstream) = squared_loss(&y, target)?;
    let grads = backward(params, &trace, &upstream)?;
    Ok((loss, grads))
}

// --- public entry points ----------------------------------------------------

/// Inference-mode forward pass: center-crops an oversized image, applies no
/// dropout, and returns the (sign-unconstrained) prediction vector.
pub fn cnn_forward(params: &ImageEncoderParams, image: &GrayImage) -> Result<Vec<f64>> {
    let tensor = image_to_tensor(image)?;
    let input = prepare_input(params.arch.input_size, &tensor, CropPolicy::Center)?;
    let (y, _) = forward_trace(params, &input, ForwardMode::Infer)?;
    Ok(y.into_vec())
}

/// Inference-mode squared loss against `target` together with its exact
/// gradients in canonical tensor order. Fully deterministic (no dropout),
/// which makes it the natural window for finite-difference checks.
pub fn cnn_loss_grads(
    params: &ImageEncoderParams,
    image: &GrayImage,
    target: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    let tensor = image_to_tensor(image)?;
    let input = prepare_input(params.arch.input_size, &tensor, CropPolicy::Center)?;
    let (y, trace) = forward_trace(params, &input, ForwardMode::Infer)?;
    let (loss, upstream) = squared_loss(&y, target)?;
    let grads = backward(params, &trace, &upstream)?;
    Ok((loss, grads))
}
