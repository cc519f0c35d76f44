//! Inverted dropout.

use super::rng::RngStream;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_p(op: &'static str, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter {
            op,
            name: "p",
            detail: format!("drop probability must satisfy 0 <= p < 1, got {p}"),
        });
    }
    Ok(())
}

/// Per-entry multipliers: survivors carry `1/(1-p)`, dropped entries `0`.
///
/// Inverted scaling keeps the activation expectation unchanged, so inference
/// needs no compensation. `p = 0` short-circuits to all-ones without
/// consuming randomness, which makes a `p = 0` training run produce the
/// identical random stream as one with dropout removed.
pub fn dropout_mask(len: usize, p: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_p("dropout", p)?;
    if p == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep_scale = 1.0 / (1.0 - p);
    Ok((0..len)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep_scale })
        .collect())
}

/// Apply inverted dropout. In inference mode (`training = false`) this is the
/// identity and consumes no randomness.
pub fn dropout(input: &Tensor, p: f64, rng: &mut RngStream, training: bool) -> Result<Tensor> {
    check_p("dropout", p)?;
    if !training {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.len(), p, rng)?;
    let mut out = input.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_mode_is_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap();
        let mut rng = RngStream::new(1);
        let y = dropout(&x, 0.9, &mut rng, false).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn p_zero_is_identity_in_both_modes() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap();
        let mut rng = RngStream::new(1);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, &mut rng, false).unwrap(), x);
    }

    #[test]
    fn p_one_is_rejected() {
        let x = Tensor::vector(vec![1.0]).unwrap();
        let mut rng = RngStream::new(1);
        let err = dropout(&x, 1.0, &mut rng, true).unwrap_err().to_string();
        assert!(err.contains("p"), "{err}");
        assert!(dropout(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn half_rate_zeroes_about_half_and_doubles_the_rest() {
        let n = 100_000;
        let x = Tensor::full(&[n], 1.0);
        let mut rng = RngStream::new(42);
        let y = dropout(&x, 0.5, &mut rng, true).unwrap();
        let zeros = y.as_slice().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac), "zero fraction {frac}");
        for &v in y.as_slice() {
            assert!(v == 0.0 || v == 2.0);
        }
    }

    #[test]
    fn survivor_scale_preserves_expectation() {
        let n = 200_000;
        let x = Tensor::full(&[n], 1.0);
        let mut rng = RngStream::new(7);
        let y = dropout(&x, 0.3, &mut rng, true).unwrap();
        let mean = y.as_slice().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }
}
