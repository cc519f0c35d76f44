//! Finite-difference gradient oracle.
//!
//! The checker only evaluates the supplied scalar function; it shares no code
//! with any backward pass, so agreement between the two is meaningful
//! evidence that the analytic gradients are right.

use super::tensor::Tensor;

/// Central-difference gradient of `f` at `x`:
/// `grad_i = (f(x + h e_i) - f(x - h e_i)) / (2h)`.
///
/// `h` must be positive. The function is evaluated `2 * x.len()` times.
pub fn finite_diff_grad(f: &mut dyn FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    assert!(h > 0.0 && h.is_finite(), "step size must be positive");
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let original = probe.as_slice()[i];
        probe.as_mut_slice()[i] = original + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = original - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = original;
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error with an absolute floor: values whose magnitudes both sit
/// below the floor are treated as matching, which keeps finite-difference
/// round-off on near-zero gradients from dominating the comparison.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-6 {
        return 0.0;
    }
    (a - b).abs() / scale
}

/// Largest entrywise [`relative_error`] between two same-shaped tensors.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(x) = sum x^2, grad = 2x; central differences are exact on quadratics
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(&mut |t| t.as_slice().iter().map(|v| v * v).sum(), &x, 1e-4);
        assert!((g.as_slice()[0] - 2.0).abs() < 1e-8);
        assert!((g.as_slice()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn sine_derivative_matches_cosine() {
        let x = Tensor::vector(vec![0.3, 1.1, -0.7]).unwrap();
        let g = finite_diff_grad(&mut |t| t.as_slice().iter().map(|v| v.sin()).sum(), &x, 1e-5);
        for (gi, xi) in g.as_slice().iter().zip(x.as_slice()) {
            assert!((gi - xi.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn probe_point_is_restored() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let before = x.clone();
        let _ = finite_diff_grad(&mut |t| t.as_slice().iter().sum(), &x, 1e-5);
        assert_eq!(x, before);
    }

    #[test]
    fn relative_error_floors_near_zero() {
        assert_eq!(relative_error(1e-9, -1e-9), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
