//! Numeric foundations: tensors, deterministic RNG streams, layer
//! forward/backward kernels, ADAM, and the finite-difference oracle.
//!
//! Every backward pass here is hand-derived; `gradcheck` provides the
//! independent central-difference oracle the test suite checks them against.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod pool;
pub mod rng;
pub mod tensor;

pub use activation::{relu, relu_backward};
pub use adam::{AdamConfig, AdamSet, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::{dropout, dropout_mask};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use pool::{maxpool2x2, maxpool2x2_backward};
pub use rng::RngStream;
pub use tensor::Tensor;

use crate::error::Result;

/// Glorot/Xavier uniform initialization: entries drawn from
/// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngStream,
) -> Result<Tensor> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform_in(-limit, limit)).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_the_limit() {
        let mut rng = RngStream::new(13);
        let t = glorot_uniform(&[40, 30], 30, 40, &mut rng).unwrap();
        let limit = (6.0 / 70.0_f64).sqrt();
        for &v in t.as_slice() {
            assert!(v.abs() <= limit);
        }
        // not degenerate
        let spread = t.as_slice().iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!(spread > limit * 0.5);
    }
}
