//! 2x2 max-pooling with stride 2.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Pool each channel over non-overlapping 2x2 windows, keeping the maximum.
///
/// Odd trailing rows/columns are truncated: the output is `[C, H/2, W/2]`
/// with integer division. Alongside the pooled tensor the flat input index
/// of each window's maximum is returned for the backward pass. Ties pick the
/// first entry in row-major window order `(0,0), (0,1), (1,0), (1,1)`.
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c_in, h, w) = input.dims3("maxpool2x2")?;
    let oh = h / 2;
    let ow = w / 2;
    let x = input.as_slice();
    let mut out = vec![0.0; c_in * oh * ow];
    let mut argmax = vec![0usize; c_in * oh * ow];
    for c in 0..c_in {
        for i in 0..oh {
            for j in 0..ow {
                let base = (c * h + 2 * i) * w + 2 * j;
                let candidates = [base, base + 1, base + w, base + w + 1];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (c * oh + i) * ow + j;
                out[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    Ok((Tensor::from_vec(&[c_in, oh, ow], out)?, argmax))
}

/// Route `upstream` back to the recorded argmax positions; all other input
/// positions (including truncated rows/columns) receive zero gradient.
pub fn maxpool2x2_backward(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor,
) -> Result<Tensor> {
    if input_shape.len() != 3 {
        return Err(Error::Dimension {
            op: "maxpool2x2_backward",
            detail: format!("expected rank-3 input shape, got {input_shape:?}"),
        });
    }
    if upstream.len() != argmax.len() {
        return Err(Error::Dimension {
            op: "maxpool2x2_backward",
            detail: format!(
                "upstream has {} entries but {} argmax indices were recorded",
                upstream.len(),
                argmax.len()
            ),
        });
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = upstream.as_slice();
    let slot = grad.as_mut_slice();
    for (o, &idx) in argmax.iter().enumerate() {
        if idx >= slot.len() {
            return Err(Error::Dimension {
                op: "maxpool2x2_backward",
                detail: format!("argmax index {idx} outside input of {} entries", slot.len()),
            });
        }
        slot[idx] += g[o];
    }
    Ok(grad)
}
