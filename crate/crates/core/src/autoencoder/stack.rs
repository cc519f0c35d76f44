//! Vector-space internals of the tied-weight auto-encoder.
//!
//! Everything here works on plain `&[f64]` activations so the same code
//! trains the pose-level auto-encoder and the greedy single-layer stages
//! that operate on latent codes.

use super::{AeGradients, AeLayer};
use crate::numerics::{RngStream, Tensor};

/// Encoder intermediates for one input: `act[0]` is the input, `pre[j]` the
/// pre-activation of layer `j`, `act[j+1] = relu(pre[j])`.
pub(crate) struct EncodeTrace {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

fn affine(weight: &Tensor, bias: &[f64], input: &[f64]) -> Vec<f64> {
    let shape = weight.shape();
    let (out_dim, in_dim) = (shape[0], shape[1]);
    let w = weight.as_slice();
    let mut out = bias.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let mut acc = 0.0;
        for (wij, xj) in row.iter().zip(input) {
            acc += wij * xj;
        }
        *o += acc;
    }
    debug_assert_eq!(out.len(), out_dim);
    out
}

/// `weight^T * input + bias` without materializing the transpose. Summation
/// runs over the weight's row index in ascending order, matching a plain
/// forward pass through the materialized transpose bit for bit.
fn affine_transposed(weight: &Tensor, bias: &[f64], input: &[f64]) -> Vec<f64> {
    let shape = weight.shape();
    let (out_dim, in_dim) = (shape[0], shape[1]);
    debug_assert_eq!(input.len(), out_dim);
    let w = weight.as_slice();
    let mut out = bias.to_vec();
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..out_dim {
            acc += w[i * in_dim + j] * input[i];
        }
        *o += acc;
    }
    out
}

fn relu_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x < 0.0 { 0.0 } else { x }).collect()
}

pub(crate) fn encode_trace(layers: &[AeLayer], input: &[f64]) -> EncodeTrace {
    let mut pre = Vec::with_capacity(layers.len());
    let mut act = Vec::with_capacity(layers.len() + 1);
    act.push(input.to_vec());
    for layer in layers {
        let z = affine(&layer.weight, layer.encode_bias.as_slice(), act.last().unwrap());
        act.push(relu_vec(&z));
        pre.push(z);
    }
    EncodeTrace { pre, act }
}

pub(crate) fn encode_vec(layers: &[AeLayer], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for layer in layers {
        x = relu_vec(&affine(&layer.weight, layer.encode_bias.as_slice(), &x));
    }
    x
}

/// Decoder intermediates. Decode applies layers in reverse index order with
/// the transposed encode weights; `pre[s]` is the affine output of decode
/// step `s` (layer index `L-1-s`), `act[s]` the input to step `s`. Every
/// step but the last is followed by ReLU; the final step stays linear.
pub(crate) struct DecodeTrace {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

pub(crate) fn decode_trace(layers: &[AeLayer], code: &[f64]) -> DecodeTrace {
    let count = layers.len();
    let mut pre = Vec::with_capacity(count);
    let mut act = Vec::with_capacity(count);
    let mut x = code.to_vec();
    for (s, layer) in layers.iter().rev().enumerate() {
        act.push(x.clone());
        let t = affine_transposed(&layer.weight, layer.decode_bias.as_slice(), &x);
        if s + 1 < count {
            x = relu_vec(&t);
        } else {
            x = t.clone();
        }
        pre.push(t);
    }
    DecodeTrace { pre, act }
}

pub(crate) fn decode_vec(layers: &[AeLayer], code: &[f64]) -> Vec<f64> {
    let count = layers.len();
    let mut x = code.to_vec();
    for (s, layer) in layers.iter().rev().enumerate() {
        let t = affine_transposed(&layer.weight, layer.decode_bias.as_slice(), &x);
        x = if s + 1 < count { relu_vec(&t) } else { t };
    }
    x
}

pub(crate) fn reconstruct_vec(layers: &[AeLayer], input: &[f64]) -> Vec<f64> {
    decode_vec(layers, &encode_vec(layers, input))
}

/// Gaussian corruption; optionally re-zero a leading prefix afterwards
/// (poses pin the root joint back onto the origin).
pub(crate) fn corrupt_vec(
    input: &[f64],
    sigma: f64,
    zero_prefix: usize,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mut out: Vec<f64> = input.iter().map(|&v| rng.normal(v, sigma)).collect();
    for v in out.iter_mut().take(zero_prefix) {
        *v = 0.0;
    }
    out
}

// --- contractive penalty -------------------------------------------------

/// Zero out the rows of `weight` whose units are inactive (`pre <= 0`),
/// yielding the masked factor `M_j W_j` of the encoder Jacobian.
fn masked_weight(weight: &Tensor, pre: &[f64]) -> Tensor {
    let shape = weight.shape();
    let (out_dim, in_dim) = (shape[0], shape[1]);
    let mut t = weight.clone();
    let data = t.as_mut_slice();
    for (i, z) in pre.iter().enumerate().take(out_dim) {
        if *z <= 0.0 {
            for v in &mut data[i * in_dim..(i + 1) * in_dim] {
                *v = 0.0;
            }
        }
    }
    t
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    debug_assert_eq!(k, k2);
    let av = a.as_slice();
    let bv = b.as_slice();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let ail = av[i * k + l];
            if ail == 0.0 {
                continue;
            }
            let brow = &bv[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += ail * brow[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], out).expect("finite matmul")
}

/// `a^T * b` for `a: [k, m]`, `b: [k, n]`.
fn matmul_ta(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    debug_assert_eq!(k, k2);
    let av = a.as_slice();
    let bv = b.as_slice();
    let mut out = vec![0.0; m * n];
    for l in 0..k {
        let arow = &av[l * m..(l + 1) * m];
        let brow = &bv[l * n..(l + 1) * n];
        for i in 0..m {
            let ali = arow[i];
            if ali == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += ali * brow[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], out).expect("finite matmul")
}

/// `a * b^T` for `a: [m, k]`, `b: [n, k]`.
fn matmul_tb(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (n, k2) = (b.shape()[0], b.shape()[1]);
    debug_assert_eq!(k, k2);
    let av = a.as_slice();
    let bv = b.as_slice();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &av[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &bv[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for l in 0..k {
                acc += arow[l] * brow[l];
            }
            *o += acc;
        }
    }
    Tensor::from_vec(&[m, n], out).expect("finite matmul")
}

/// Squared Frobenius norm of the encoder Jacobian at `input`, together with
/// its gradient with respect to each layer's weight matrix.
///
/// With ReLU masks `M_j = diag(pre_j > 0)` held fixed (they are piecewise
/// constant in the parameters), the Jacobian is the product of masked weight
/// matrices `J = A_L ... A_1`, `A_j = M_j W_j`, and
///
/// ```text
/// d||J||_F^2 / dW_j = 2 M_j B_j^T J C_j^T,   B_j = A_L...A_{j+1},  C_j = A_{j-1}...A_1
/// ```
///
/// Encode and decode biases do not enter the Jacobian, so their gradient
/// contribution is zero.
pub(crate) fn penalty_with_weight_grads(layers: &[AeLayer], input: &[f64]) -> (f64, Vec<Tensor>) {
    let count = layers.len();
    let trace = encode_trace(layers, input);
    let masked: Vec<Tensor> = layers
        .iter()
        .zip(&trace.pre)
        .map(|(layer, pre)| masked_weight(&layer.weight, pre))
        .collect();

    // prefix[j] = A_j ... A_1; C_j = prefix[j-1] (identity for j = 1)
    let mut prefix: Vec<Tensor> = Vec::with_capacity(count);
    for (j, a) in masked.iter().enumerate() {
        let p = if j == 0 {
            a.clone()
        } else {
            matmul(a, &prefix[j - 1])
        };
        prefix.push(p);
    }
    let jac = prefix[count - 1].clone();
    let value = jac.squared_norm();

    // Walk layers from the top, maintaining the suffix product B_j.
    let mut grads: Vec<Tensor> = vec![Tensor::zeros(&[0]); count];
    let mut suffix: Option<Tensor> = None; // B_L = identity
    for j in (0..count).rev() {
        // P = B_j^T J  (skip the multiply while B is still the identity)
        let p = match &suffix {
            None => jac.clone(),
            Some(b) => matmul_ta(b, &jac),
        };
        // G = P C_j^T (C_1 is the identity)
        let mut g = if j == 0 {
            p
        } else {
            matmul_tb(&p, &prefix[j - 1])
        };
        // left-multiply by M_j and scale by 2
        let (out_dim, in_dim) = (g.shape()[0], g.shape()[1]);
        {
            let data = g.as_mut_slice();
            for (i, z) in trace.pre[j].iter().enumerate().take(out_dim) {
                let row = &mut data[i * in_dim..(i + 1) * in_dim];
                if *z <= 0.0 {
                    for v in row.iter_mut() {
                        *v = 0.0;
                    }
                } else {
                    for v in row.iter_mut() {
                        *v *= 2.0;
                    }
                }
            }
        }
        grads[j] = g;
        suffix = Some(match suffix {
            None => masked[j].clone(),
            Some(b) => matmul(&b, &masked[j]),
        });
    }
    (value, grads)
}

/// Penalty value only: squared Frobenius norm of the encoder Jacobian,
/// computed from the running prefix product without forming gradients.
pub(crate) fn penalty_value(layers: &[AeLayer], input: &[f64]) -> f64 {
    let trace = encode_trace(layers, input);
    let mut prefix: Option<Tensor> = None;
    for (layer, pre) in layers.iter().zip(&trace.pre) {
        let a = masked_weight(&layer.weight, pre);
        prefix = Some(match prefix {
            None => a,
            Some(p) => matmul(&a, &p),
        });
    }
    prefix.expect("at least one layer").squared_norm()
}

// --- denoising loss ------------------------------------------------------

/// Loss value only for one (clean, corrupted) pair.
pub(crate) fn sample_loss_value(
    layers: &[AeLayer],
    clean: &[f64],
    corrupted: &[f64],
    lambda: f64,
) -> f64 {
    let output = reconstruct_vec(layers, corrupted);
    let mut loss: f64 = output
        .iter()
        .zip(clean)
        .map(|(&o, &y)| (o - y) * (o - y))
        .sum();
    if lambda != 0.0 {
        loss += lambda * penalty_value(layers, clean);
    }
    loss
}

/// Mean per-sample loss over a dataset, without gradients. Corruption
/// consumes `rng` one sample at a time in order, exactly like `batch_loss`,
/// so a cloned stream reproduces the same evaluation points.
pub(crate) fn mean_dataset_loss(
    layers: &[AeLayer],
    data: &[Vec<f64>],
    sigma: f64,
    lambda: f64,
    zero_prefix: usize,
    rng: &mut RngStream,
) -> f64 {
    debug_assert!(!data.is_empty());
    let mut loss = 0.0;
    for clean in data {
        let corrupted = corrupt_vec(clean, sigma, zero_prefix, rng);
        loss += sample_loss_value(layers, clean, &corrupted, lambda);
    }
    loss / data.len() as f64
}

/// Accumulate loss and gradients for one training sample:
/// squared reconstruction error of the corrupted input against the clean
/// target, plus `lambda` times the contractive penalty at the clean input.
///
/// Tied weights receive two additive contributions per layer: one from the
/// encode pass and the transpose of the decode-side gradient.
pub(crate) fn accumulate_sample_loss(
    layers: &[AeLayer],
    clean: &[f64],
    corrupted: &[f64],
    lambda: f64,
    grads: &mut AeGradients,
) -> f64 {
    let count = layers.len();
    let enc = encode_trace(layers, corrupted);
    let dec = decode_trace(layers, enc.act.last().unwrap());
    let output = &dec.pre[count - 1];

    let mut loss = 0.0;
    let mut g: Vec<f64> = output
        .iter()
        .zip(clean)
        .map(|(&o, &y)| {
            let d = o - y;
            loss += d * d;
            2.0 * d
        })
        .collect();

    // Decode side, from the output step back to the code.
    for s in (0..count).rev() {
        let layer_index = count - 1 - s;
        let layer = &layers[layer_index];
        let slot = &mut grads.layers[layer_index];
        let u = &dec.act[s];
        // decode step s computed: t = W^T u + c, so dL/dc += g,
        // dL/dW += u (outer) g, and dL/du = W g.
        let (out_dim, in_dim) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        debug_assert_eq!(u.len(), out_dim);
        debug_assert_eq!(g.len(), in_dim);
        for (bi, gi) in slot.decode_bias.as_mut_slice().iter_mut().zip(&g) {
            *bi += gi;
        }
        let w = layer.weight.as_slice();
        let gw = slot.weight.as_mut_slice();
        let mut g_up = vec![0.0; out_dim];
        for i in 0..out_dim {
            let ui = u[i];
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let grow = &mut gw[i * in_dim..(i + 1) * in_dim];
            let mut acc = 0.0;
            for j in 0..in_dim {
                grow[j] += ui * g[j];
                acc += row[j] * g[j];
            }
            g_up[i] = acc;
        }
        if s > 0 {
            // u was relu(pre[s-1])
            for (gv, z) in g_up.iter_mut().zip(&dec.pre[s - 1]) {
                if *z <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        g = g_up;
    }

    // Encode side, from the code back to the input.
    for j in (0..count).rev() {
        let layer = &layers[j];
        let slot = &mut grads.layers[j];
        for (gv, z) in g.iter_mut().zip(&enc.pre[j]) {
            if *z <= 0.0 {
                *gv = 0.0;
            }
        }
        let h_prev = &enc.act[j];
        let (out_dim, in_dim) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        for (bi, gz) in slot.encode_bias.as_mut_slice().iter_mut().zip(&g) {
            *bi += gz;
        }
        let w = layer.weight.as_slice();
        let gw = slot.weight.as_mut_slice();
        let mut g_down = vec![0.0; in_dim];
        for i in 0..out_dim {
            let gz = g[i];
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let grow = &mut gw[i * in_dim..(i + 1) * in_dim];
            if gz != 0.0 {
                for j2 in 0..in_dim {
                    grow[j2] += gz * h_prev[j2];
                    g_down[j2] += row[j2] * gz;
                }
            }
        }
        g = g_down;
    }

    if lambda != 0.0 {
        let (value, pgrads) = penalty_with_weight_grads(layers, clean);
        loss += lambda * value;
        for (slot, pg) in grads.layers.iter_mut().zip(&pgrads) {
            let dst = slot.weight.as_mut_slice();
            for (d, s) in dst.iter_mut().zip(pg.as_slice()) {
                *d += lambda * s;
            }
        }
    }
    loss
}

/// Total loss and gradients over a batch of clean samples; corruption noise
/// comes from `rng`, one corruption per sample in order.
pub(crate) fn batch_loss(
    layers: &[AeLayer],
    batch: &[&[f64]],
    sigma: f64,
    lambda: f64,
    zero_prefix: usize,
    rng: &mut RngStream,
) -> (f64, AeGradients) {
    let mut grads = AeGradients::zeros_like(layers);
    let mut loss = 0.0;
    for clean in batch {
        let corrupted = corrupt_vec(clean, sigma, zero_prefix, rng);
        loss += accumulate_sample_loss(layers, clean, &corrupted, lambda, &mut grads);
    }
    (loss, grads)
}
