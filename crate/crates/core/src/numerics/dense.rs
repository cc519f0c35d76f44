//! Fully connected layer.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `out = weights * input + bias`, with `weights` stored `[out_dim, in_dim]`.
pub fn dense_forward(weights: &Tensor, bias: &Tensor, input: &Tensor) -> Result<Tensor> {
    let (out_dim, in_dim) = weights.dims2("dense_forward")?;
    if bias.shape() != [out_dim] {
        return Err(Error::Dimension {
            op: "dense_forward",
            detail: format!("weight rows {out_dim} vs bias shape {:?}", bias.shape()),
        });
    }
    if input.shape() != [in_dim] {
        return Err(Error::Dimension {
            op: "dense_forward",
            detail: format!("weight columns {in_dim} vs input shape {:?}", input.shape()),
        });
    }
    let w = weights.as_slice();
    let x = input.as_slice();
    let mut out = bias.as_slice().to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let mut acc = 0.0;
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *o += acc;
    }
    Ok(Tensor::from_vec(&[out_dim], out).expect("finite inputs produce finite output"))
}

pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

/// Backward pass for [`dense_forward`] given `upstream = dL/d(out)`.
///
/// Returns `dL/dW = upstream (x) input`, `dL/db = upstream`, and
/// `dL/dx = W^T upstream`.
pub fn dense_backward(weights: &Tensor, input: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
    let (out_dim, in_dim) = weights.dims2("dense_backward")?;
    if input.shape() != [in_dim] {
        return Err(Error::Dimension {
            op: "dense_backward",
            detail: format!("weight columns {in_dim} vs input shape {:?}", input.shape()),
        });
    }
    if upstream.shape() != [out_dim] {
        return Err(Error::Dimension {
            op: "dense_backward",
            detail: format!("weight rows {out_dim} vs upstream shape {:?}", upstream.shape()),
        });
    }
    let w = weights.as_slice();
    let x = input.as_slice();
    let g = upstream.as_slice();

    let mut grad_w = vec![0.0; w.len()];
    let mut grad_x = vec![0.0; in_dim];
    for i in 0..out_dim {
        let gi = g[i];
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let grow = &mut grad_w[i * in_dim..(i + 1) * in_dim];
        for j in 0..in_dim {
            grow[j] = gi * x[j];
            grad_x[j] += row[j] * gi;
        }
    }
    Ok(DenseGrads {
        weights: Tensor::from_vec(&[out_dim, in_dim], grad_w)?,
        bias: upstream.clone(),
        input: Tensor::from_vec(&[in_dim], grad_x)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_zero_bias_pass_input_through() {
        let w = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let b = Tensor::zeros(&[3]);
        let x = Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap();
        let y = dense_forward(&w, &b, &x).unwrap();
        assert_eq!(y.as_slice(), x.as_slice());
    }

    #[test]
    fn known_small_case() {
        // [[1, 2], [3, 4]] * [1, 1] + [10, 20] = [13, 27]
        let w = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::vector(vec![10., 20.]).unwrap();
        let x = Tensor::vector(vec![1., 1.]).unwrap();
        assert_eq!(dense_forward(&w, &b, &x).unwrap().as_slice(), &[13., 27.]);
    }

    #[test]
    fn mismatched_input_is_rejected_with_operand_names() {
        let w = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2]);
        let x = Tensor::zeros(&[4]);
        let err = dense_forward(&w, &b, &x).unwrap_err().to_string();
        assert!(err.contains("dense_forward"), "{err}");
        assert!(err.contains("3") && err.contains("4"), "{err}");
    }

    #[test]
    fn backward_matches_hand_computation() {
        let w = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let x = Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap();
        let g = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let grads = dense_backward(&w, &x, &g).unwrap();
        assert_eq!(
            grads.weights.as_slice(),
            &[0.5, -1.0, 2.0, -1.0, 2.0, -4.0]
        );
        assert_eq!(grads.bias.as_slice(), g.as_slice());
        // W^T g = [1*1 + 4*(-2), 2*1 + 5*(-2), 3*1 + 6*(-2)]
        assert_eq!(grads.input.as_slice(), &[-7.0, -8.0, -9.0]);
    }
}
