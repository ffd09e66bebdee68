use alloc::vec;
use alloc::vec::Vec;

use super::{GradVector, ParamSnapshot};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, owned by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. On error neither `params` nor `state`
/// changes.
pub fn adam_step(
    params: &ParamSnapshot,
    grad: &GradVector,
    state: &mut AdamState,
    lr: f64,
) -> Result<ParamSnapshot> {
    let n = params.len();
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            what: "gradient",
            expected: n,
            actual: grad.len(),
        });
    }
    if state.m.len() != n {
        return Err(Error::DimensionMismatch {
            what: "optimizer state",
            expected: n,
            actual: state.m.len(),
        });
    }
    grad.check_finite()?;

    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - libm::pow(beta1, t as f64);
    let c2 = 1.0 - libm::pow(beta2, t as f64);
    let mut values = params.values().to_vec();
    for (((p, &g), m), v) in values
        .iter_mut()
        .zip(grad.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
    }
    Ok(params.successor(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_bumps_version() {
        let p = ParamSnapshot::new(3, 9, vec![0.5, -1.0, 2.0]);
        let mut s = AdamState::new(3, AdamConfig::default());
        let next = adam_step(&p, &GradVector::zeros(3), &mut s, 1e-3).unwrap();
        assert_eq!(next.values(), p.values());
        assert_eq!(next.version(), 4);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // lr * g / (|g| + eps).
        let lr = 1e-4;
        let p = ParamSnapshot::new(0, 0, vec![1.0]);
        let mut s = AdamState::new(1, AdamConfig::default());
        let g = GradVector::new(vec![1.0]).unwrap();
        let p1 = adam_step(&p, &g, &mut s, lr).unwrap();
        let expected = lr * 1.0 / (1.0 + 1e-8);
        assert!((1.0 - p1.values()[0] - expected).abs() < 1e-15);
        // Constant gradient keeps the step at ~lr.
        let p2 = adam_step(&p1, &g, &mut s, lr).unwrap();
        assert!(((p1.values()[0] - p2.values()[0]) - lr).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let p = ParamSnapshot::new(0, 0, vec![1.0, 2.0]);
        let mut s = AdamState::new(2, AdamConfig::default());
        let before = s.clone();
        let bad = GradVector::from_raw(vec![0.1, f64::NAN]);
        assert_eq!(
            adam_step(&p, &bad, &mut s, 1e-3),
            Err(Error::NonFiniteGradient(1))
        );
        assert_eq!(s, before);
        assert!(GradVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn layout_mismatch() {
        let p = ParamSnapshot::new(0, 0, vec![1.0, 2.0]);
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&p, &GradVector::zeros(3), &mut s, 1e-3).is_err());
    }
}
