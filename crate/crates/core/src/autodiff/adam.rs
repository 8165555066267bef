use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers keyed by name.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient entry are left
    /// untouched (their moments do not decay).
    pub fn apply(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "{name}: parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.check_finite("adam")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([(name.to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = single("w", 0.7);
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..3 {
            adam.apply(&mut params, &single("w", 0.0)).unwrap();
        }
        assert_eq!(params["w"].item(), 0.7);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn first_step_matches_scalar_formula() {
        let g = 0.25;
        let cfg = AdamConfig::default();
        let mut params = single("w", 1.0);
        let mut adam = AdamState::new(cfg);
        adam.apply(&mut params, &single("w", g)).unwrap();
        let m = (1.0 - cfg.beta1) * g;
        let v = (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1);
        let v_hat = v / (1.0 - cfg.beta2);
        let expected = 1.0 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        assert!((params["w"].item() - expected).abs() < 1e-15);
        // the bias-corrected first step has magnitude ≈ lr
        assert!((params["w"].item() - (1.0 - cfg.lr)).abs() < 1e-10);

        // second step, hand-computed
        adam.apply(&mut params, &single("w", g)).unwrap();
        let m2 = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        let v2 = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let expected2 = expected
            - cfg.lr * (m2 / (1.0 - cfg.beta1.powi(2)))
                / ((v2 / (1.0 - cfg.beta2.powi(2))).sqrt() + cfg.eps);
        assert!((params["w"].item() - expected2).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = single("w", 1.0);
        let grads = BTreeMap::from([("w".to_string(), Tensor::zeros(&[2]))]);
        let mut adam = AdamState::new(AdamConfig::default());
        assert!(adam.apply(&mut params, &grads).is_err());
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut params = single("w", 0.3);
            let mut adam = AdamState::new(AdamConfig::default());
            let mut trace = Vec::new();
            for i in 0..20 {
                let g = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
                adam.apply(&mut params, &single("w", g)).unwrap();
                trace.push(params["w"].item().to_bits());
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
