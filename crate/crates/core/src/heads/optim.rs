use serde::{Deserialize, Serialize};

use crate::encoder::nn::{sq_norm, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Peak learning rate.
    pub lr: f64,
    /// SGD momentum, or Adam's first-moment decay.
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    /// Decay linearly to zero at the last step.
    pub linear_decay: bool,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.05,
            momentum: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 50,
            linear_decay: true,
            clip_norm: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta2) {
            return Err("momentum and beta2 must lie in [0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err("eps must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 || !c.is_finite() {
                return Err(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Learning rate at 0-based `step` of `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let warm = if self.warmup_steps > 0 { ((step + 1) as f64 / self.warmup_steps as f64).min(1.0) } else { 1.0 };
        let decay = if self.linear_decay && total > 0 { (1.0 - step as f64 / total as f64).max(0.0) } else { 1.0 };
        self.lr * warm * decay
    }
}

/// First-order optimizer over any [`Params`] value.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    total_steps: usize,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

/// What one update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub lr: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Optimizer {
    pub fn new<P: Params>(config: OptimizerConfig, params: &P, total_steps: usize) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let second = if config.kind == OptimizerKind::Adam { zeros.clone() } else { Vec::new() };
        Optimizer { config, total_steps, step: 0, first: zeros, second }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> StepInfo {
        let lr = self.config.lr_at(self.step, self.total_steps);
        let grad_norm = sq_norm(grads).sqrt();
        let clip = match self.config.clip_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let (b1, b2) = (c.momentum, c.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let gs = grads.tensors();
        for (i, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = gs[i].1;
            let m = &mut self.first[i];
            match c.kind {
                OptimizerKind::Sgd => {
                    for j in 0..p.len() {
                        m[j] = b1 * m[j] + g[j] * clip;
                        p[j] -= lr * m[j];
                    }
                }
                OptimizerKind::Adam => {
                    let v = &mut self.second[i];
                    for j in 0..p.len() {
                        let gj = g[j] * clip;
                        m[j] = b1 * m[j] + (1.0 - b1) * gj;
                        v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                        p[j] -= lr * (m[j] / bias1) / ((v[j] / bias2).sqrt() + c.eps);
                    }
                }
            }
        }
        StepInfo { lr, grad_norm, clipped: clip < 1.0 }
    }
}
