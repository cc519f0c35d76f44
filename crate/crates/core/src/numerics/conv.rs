//! 2-D convolution (cross-correlation), valid padding, stride 1.

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_geometry(
    op: &'static str,
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (c_in, h, w) = input.dims3(op)?;
    let (k, c_k, kh, kw) = kernels.dims4(op)?;
    if c_k != c_in {
        return Err(Error::Dimension {
            op,
            detail: format!("input channels {c_in} vs kernel channels {c_k}"),
        });
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::Dimension {
            op,
            detail: format!("kernel {kh}x{kw} does not fit input {h}x{w}"),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [k] {
            return Err(Error::Dimension {
                op,
                detail: format!("kernel count {k} vs bias shape {:?}", b.shape()),
            });
        }
    }
    Ok((c_in, h, w, k, kh, kw))
}

/// `out[k][i][j] = bias[k] + sum_{c,u,v} input[c][i+u][j+v] * kernels[k][c][u][v]`
///
/// Output shape is `[K, H-kh+1, W-kw+1]`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, h, w, k, kh, kw) = check_geometry("conv2d_forward", input, kernels, Some(bias))?;
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let x = input.as_slice();
    let ker = kernels.as_slice();
    let b = bias.as_slice();

    let mut out = vec![0.0; k * oh * ow];
    for ko in 0..k {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b[ko];
                for c in 0..c_in {
                    let k_base = ((ko * c_in + c) * kh) * kw;
                    for u in 0..kh {
                        let x_base = (c * h + i + u) * w + j;
                        let k_row = k_base + u * kw;
                        for v in 0..kw {
                            acc += x[x_base + v] * ker[k_row + v];
                        }
                    }
                }
                out[(ko * oh + i) * ow + j] = acc;
            }
        }
    }
    Ok(Tensor::from_vec(&[k, oh, ow], out).expect("finite inputs produce finite output"))
}

pub struct ConvGrads {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

/// Backward pass for [`conv2d_forward`] given `upstream = dL/d(out)`.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
    let (c_in, h, w, k, kh, kw) = check_geometry("conv2d_backward", input, kernels, None)?;
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    if upstream.shape() != [k, oh, ow] {
        return Err(Error::Dimension {
            op: "conv2d_backward",
            detail: format!(
                "expected upstream shape [{k}, {oh}, {ow}], got {:?}",
                upstream.shape()
            ),
        });
    }
    let x = input.as_slice();
    let ker = kernels.as_slice();
    let g = upstream.as_slice();

    let mut grad_ker = vec![0.0; ker.len()];
    let mut grad_bias = vec![0.0; k];
    let mut grad_in = vec![0.0; x.len()];
    for ko in 0..k {
        for i in 0..oh {
            for j in 0..ow {
                let gij = g[(ko * oh + i) * ow + j];
                if gij == 0.0 {
                    continue;
                }
                grad_bias[ko] += gij;
                for c in 0..c_in {
                    let k_base = ((ko * c_in + c) * kh) * kw;
                    for u in 0..kh {
                        let x_base = (c * h + i + u) * w + j;
                        let k_row = k_base + u * kw;
                        for v in 0..kw {
                            grad_ker[k_row + v] += gij * x[x_base + v];
                            grad_in[x_base + v] += gij * ker[k_row + v];
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        kernels: Tensor::from_vec(kernels.shape(), grad_ker)?,
        bias: Tensor::from_vec(&[k], grad_bias)?,
        input: Tensor::from_vec(input.shape(), grad_in)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_kernel_scales_each_channel() {
        // 2 input channels, kernel [[2.0], [3.0]] for the single output channel
        let x = Tensor::from_vec(&[2, 2, 2], vec![1., 2., 3., 4., 10., 20., 30., 40.]).unwrap();
        let ker = Tensor::from_vec(&[1, 2, 1, 1], vec![2.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &ker, &b).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        // 2*x0 + 3*x1 + 1
        assert_eq!(y.as_slice(), &[33., 65., 97., 129.]);
    }

    #[test]
    fn averaging_kernel_on_constant_image_is_constant() {
        let x = Tensor::full(&[1, 4, 4], 3.0);
        let ker = Tensor::full(&[1, 1, 2, 2], 0.25);
        let b = Tensor::zeros(&[1]);
        let y = conv2d_forward(&x, &ker, &b).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for &v in y.as_slice() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn known_3x3_case() {
        // input 1x3x3 = 1..9, kernel 2x2 of ones, no bias
        let x = Tensor::from_vec(&[1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let ker = Tensor::full(&[1, 1, 2, 2], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d_forward(&x, &ker, &b).unwrap();
        // windows: [1,2,4,5]=12 [2,3,5,6]=16 [4,5,7,8]=24 [5,6,8,9]=28
        assert_eq!(y.as_slice(), &[12., 16., 24., 28.]);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let x = Tensor::zeros(&[1, 4, 8]);
        let ker = Tensor::zeros(&[1, 1, 5, 5]);
        let b = Tensor::zeros(&[1]);
        let err = conv2d_forward(&x, &ker, &b).unwrap_err().to_string();
        assert!(err.contains("5x5") && err.contains("4x8"), "{err}");
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::zeros(&[3, 8, 8]);
        let ker = Tensor::zeros(&[4, 2, 3, 3]);
        let b = Tensor::zeros(&[4]);
        let err = conv2d_forward(&x, &ker, &b).unwrap_err().to_string();
        assert!(err.contains("channels"), "{err}");
    }
}
