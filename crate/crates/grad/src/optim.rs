//! Adam with bias-corrected moments.

use crate::backward::Gradients;
use crate::error::{GradError, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// Update one coordinate whose moments have seen `step` updates
    /// (including this one, so `step >= 1`).
    #[inline]
    pub fn update(&self, param: &mut f32, grad: f32, m: &mut f32, v: &mut f32, step: u64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
        let t = step as i32;
        let mhat = *m / (1.0 - self.beta1.powi(t));
        let vhat = *v / (1.0 - self.beta2.powi(t));
        *param -= self.lr * mhat / (vhat.sqrt() + self.eps);
    }
}

/// Optimizer state for a whole [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore<f32>) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.v
    }

    /// Rebuild from saved moments (checkpoint resume).
    pub fn restore(
        config: AdamConfig,
        params: &ParamStore<f32>,
        step: u64,
        m: Vec<Vec<f32>>,
        v: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let ok = m.len() == params.len()
            && v.len() == params.len()
            && params
                .iter()
                .zip(m.iter().zip(&v))
                .all(|((_, _, t), (a, b))| a.len() == t.len() && b.len() == t.len());
        if !ok {
            return Err(GradError::InvalidArgument {
                op: "adam_restore",
                reason: "moment shapes do not match parameters".into(),
            });
        }
        Ok(Self { config, step, m, v })
    }

    /// One update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &Gradients<f32>) -> Result<()> {
        if grads.num_params() != params.len() || self.m.len() != params.len() {
            return Err(GradError::InvalidArgument {
                op: "adam_step",
                reason: format!(
                    "{} gradients for {} parameters",
                    grads.num_params(),
                    params.len()
                ),
            });
        }
        for id in params.ids() {
            let g = grads.param(id);
            if g.len() != params.get(id).len() {
                return Err(GradError::ShapeMismatch {
                    op: "adam_step",
                    lhs: params.get(id).shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(GradError::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        self.step += 1;
        for id in params.ids() {
            let i = id.index();
            let g = grads.param(id);
            let p = params.get_mut(id).data_mut();
            for (j, x) in p.iter_mut().enumerate() {
                self.config
                    .update(x, g[j], &mut self.m[i][j], &mut self.v[i][j], self.step);
            }
        }
        Ok(())
    }
}
