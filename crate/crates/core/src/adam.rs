//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    /// One update of `params` in place. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return invalid(format!(
                "adam shape mismatch: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient component {i} is {} at adam step {}",
                grads[i],
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(3, cfg);
        let g = [0.3, -2.0, 1e-9];
        let mut p = vec![0.0; 3];
        s.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -cfg.lr * gi / ((gi * gi).sqrt() + cfg.eps);
            assert!((pi - expected).abs() <= 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut s = AdamState::new(2, AdamConfig::default());
            let mut p = vec![0.7, -0.1];
            for k in 0..50 {
                let g = [p[0] * 2.0 + k as f64 * 1e-3, (p[1] - 1.0).sin()];
                s.step(&mut p, &g).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        assert!(matches!(s.step(&mut p, &[f64::NAN]), Err(Error::NonFinite(_))));
        assert_eq!(s.step, 0);
        assert!(s.step(&mut p, &[1.0, 2.0]).is_err());
    }
}
