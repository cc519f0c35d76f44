//! ADAM optimizer with bias-corrected moment estimates.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hyper-parameters. The moment decay rates and epsilon follow the widely
/// used defaults (beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8).
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, ok: bool, detail: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::Parameter {
                    op: "adam",
                    name,
                    detail,
                })
            }
        };
        check(
            "learning_rate",
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            format!("must be positive, got {}", self.learning_rate),
        )?;
        check(
            "beta1",
            (0.0..1.0).contains(&self.beta1),
            format!("must lie in [0, 1), got {}", self.beta1),
        )?;
        check(
            "beta2",
            (0.0..1.0).contains(&self.beta2),
            format!("must lie in [0, 1), got {}", self.beta2),
        )?;
        check(
            "epsilon",
            self.epsilon > 0.0,
            format!("must be positive, got {}", self.epsilon),
        )
    }
}

/// Per-tensor optimizer state: first/second moment estimates and step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Tensor,
    second_moment: Tensor,
    step_count: u64,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Result<AdamState> {
        config.validate()?;
        Ok(AdamState {
            config,
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One ADAM update:
    ///
    /// ```text
    /// m <- b1 m + (1-b1) g        mhat = m / (1 - b1^t)
    /// v <- b2 v + (1-b2) g^2      vhat = v / (1 - b2^t)
    /// p <- p - lr * mhat / (sqrt(vhat) + eps)
    /// ```
    ///
    /// An all-zero gradient carries no information and is a no-op: the
    /// parameters and the optimizer state are left untouched, whatever
    /// the current state. (Plain ADAM would keep drifting on momentum.)
    pub fn step(&mut self, params: &mut Tensor, grads: &Tensor) -> Result<()> {
        if params.shape() != self.first_moment.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                detail: format!(
                    "state shape {:?} vs params shape {:?}",
                    self.first_moment.shape(),
                    params.shape()
                ),
            });
        }
        if grads.shape() != params.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                detail: format!(
                    "params shape {:?} vs grads shape {:?}",
                    params.shape(),
                    grads.shape()
                ),
            });
        }
        grads.check_finite("adam_step")?;
        if grads.as_slice().iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let m = self.first_moment.as_mut_slice();
        let v = self.second_moment.as_mut_slice();
        let p = params.as_mut_slice();
        let g = grads.as_slice();
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mhat = m[i] / bias1;
            let vhat = v[i] / bias2;
            p[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
        }
        params.check_finite("adam_step")
    }
}

/// A bank of [`AdamState`]s covering a list of parameter tensors, stepped in
/// lockstep. Order of the tensors defines the pairing and must stay fixed.
#[derive(Debug, Clone)]
pub struct AdamSet {
    states: Vec<AdamState>,
}

impl AdamSet {
    pub fn for_tensors(tensors: &[&Tensor], config: AdamConfig) -> Result<AdamSet> {
        let states = tensors
            .iter()
            .map(|t| AdamState::new(t.shape(), config))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdamSet { states })
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                detail: format!(
                    "optimizer tracks {} tensors, got {} params / {} grads",
                    self.states.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for ((state, param), grad) in self.states.iter_mut().zip(params).zip(grads) {
            state.step(param, grad)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut s = AdamState::new(&[3], AdamConfig::default()).unwrap();
        for _ in 0..5 {
            s.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 0);

        // The same holds with warmed-up moments: a zero gradient never
        // moves the parameters, whatever the optimizer state.
        let warm = Tensor::vector(vec![0.3, -0.7, 1.2]).unwrap();
        s.step(&mut p, &warm).unwrap();
        s.step(&mut p, &warm).unwrap();
        let (after_warm, count) = (p.clone(), s.step_count());
        s.step(&mut p, &g).unwrap();
        assert_eq!(p, after_warm);
        assert_eq!(s.step_count(), count);
    }

    #[test]
    fn first_step_moves_by_about_learning_rate() {
        // With g = 2 on the first step, mhat = g and vhat = g^2, so the update
        // is -lr * g / (|g| + eps) ~ -lr.
        let mut p = Tensor::vector(vec![0.0]).unwrap();
        let g = Tensor::vector(vec![2.0]).unwrap();
        let mut s = AdamState::new(&[1], AdamConfig::with_learning_rate(0.001)).unwrap();
        s.step(&mut p, &g).unwrap();
        let delta = p.as_slice()[0];
        assert!((delta + 0.001).abs() <= 1e-6, "delta {delta}");
    }

    #[test]
    fn constant_gradient_steps_stay_bounded() {
        let mut p = Tensor::vector(vec![0.0]).unwrap();
        let g = Tensor::vector(vec![2.0]).unwrap();
        let mut s = AdamState::new(&[1], AdamConfig::with_learning_rate(0.001)).unwrap();
        s.step(&mut p, &g).unwrap();
        let first = p.as_slice()[0];
        s.step(&mut p, &g).unwrap();
        let second = p.as_slice()[0] - first;
        assert!(second.abs() <= first.abs() * 1.01, "{first} then {second}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[4]);
        let mut s = AdamState::new(&[3], AdamConfig::default()).unwrap();
        assert!(s.step(&mut p, &g).is_err());
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(&[1], bad).is_err());
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(&[1], bad).is_err());
    }
}
