//! Rectified linear activation.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Entrywise `max(x, 0)`. Shape-preserving.
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Backward pass: passes `upstream` through where the pre-activation is
/// strictly positive. The subgradient at exactly zero is taken as 0.
pub fn relu_backward(pre_activation: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if pre_activation.shape() != upstream.shape() {
        return Err(Error::Dimension {
            op: "relu_backward",
            detail: format!(
                "pre-activation shape {:?} vs upstream shape {:?}",
                pre_activation.shape(),
                upstream.shape()
            ),
        });
    }
    let mut out = upstream.clone();
    for (g, z) in out.as_mut_slice().iter_mut().zip(pre_activation.as_slice()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}
