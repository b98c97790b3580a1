use rand::Rng;

use crate::camera::Action;
use crate::error::{CoreError, Result};

/// Head outputs for one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub logits: [f32; 4],
    pub value: f32,
}

impl PolicyOutput {
    pub fn probs(&self) -> [f64; 4] {
        softmax(&self.logits)
    }
}

pub fn softmax(logits: &[f32; 4]) -> [f64; 4] {
    let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let mut p = logits.map(|l| (l as f64 - max).exp());
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

/// Probability of `action` under the mixture `(1 - beta) pi + beta U`.
pub fn behavior_prob(probs: &[f64; 4], action: Action, beta: f64) -> f64 {
    (1.0 - beta) * probs[action.index()] + beta / Action::COUNT as f64
}

/// Draw from the mixture of the policy and the uniform distribution.
pub fn sample_action(out: &PolicyOutput, beta: f64, rng: &mut impl Rng) -> Result<(Action, f64)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    let probs = out.probs();
    let idx = if rng.random::<f64>() < beta {
        rng.random_range(0..Action::COUNT)
    } else {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        probs
            .iter()
            .position(|&p| {
                acc += p;
                u < acc
            })
            .unwrap_or(Action::COUNT - 1)
    };
    let action = Action::from_index(idx).expect("index below action count");
    Ok((action, behavior_prob(&probs, action, beta)))
}
