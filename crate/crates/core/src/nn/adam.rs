use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};

/// Adaptive-moment settings with a step-decay schedule on the epoch index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// The rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_every: 50,
            decay_factor: 0.5,
        }
    }
}

impl AdamConfig {
    /// Learning rate in force during (zero-based) `epoch`.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let drops = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.learning_rate * self.decay_factor.powi(drops as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    /// One update. Non-finite gradients leave parameters and moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], epoch: usize) -> Result<()> {
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(PsmError::Dimension {
                expected: self.m.len(),
                actual: grads.len(),
                context: "optimizer gradient",
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(PsmError::NonFinite(format!("gradient entry {i}")));
        }
        let c = &self.config;
        self.steps += 1;
        let t = self.steps as i32;
        let lr = c.rate_at(epoch);
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}
