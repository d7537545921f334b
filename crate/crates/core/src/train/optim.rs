use crate::model::DenoiserParams;

use super::config::TrainConfig;

/// Adam with decoupled weight decay. Decay applies to matrices only; norm
/// gains, biases and the mask row are left alone.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: DenoiserParams,
    v: DenoiserParams,
    step: u64,
}

impl AdamW {
    pub fn new(params: &DenoiserParams, config: &TrainConfig) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut DenoiserParams, grads: &DenoiserParams, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let decays: Vec<bool> = params.tensors().iter().map(|(_, shape, _)| shape.len() == 2).collect();
        let g: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, _, t)| t).collect();
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for ((((p, g), m), v), decay) in params
            .tensors_mut()
            .into_iter()
            .zip(g)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(decays)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                if decay {
                    p[i] -= lr * wd * p[i];
                }
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        params.bump_epoch();
    }
}
