use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Optimization settings shared by reference, target and control training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Fraction of total optimizer steps spent in linear warmup.
    pub warmup_ratio: f64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub epochs: usize,
    /// Lower clamp on `t` inside the `1/t` loss weight.
    pub t_min: f64,
    /// Tokens per denoised block.
    pub block_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            warmup_ratio: 0.03,
            batch_size: 16,
            grad_accum_steps: 1,
            epochs: 1,
            t_min: 0.01,
            block_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < 0.5) {
            return invalid(format!("t_min {} must lie in (0, 0.5)", self.t_min));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return invalid("learning rate and adam epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid("adam betas must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || !(0.0..=1.0).contains(&self.warmup_ratio) {
            return invalid("weight decay must be >= 0 and warmup ratio in [0, 1]");
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.epochs == 0 || self.block_size == 0 {
            return invalid("batch size, accumulation steps, epochs and block size must be positive");
        }
        Ok(())
    }
}
