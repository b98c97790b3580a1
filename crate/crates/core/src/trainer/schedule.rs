use crate::error::{CoreError, Result};

/// Mixing coefficient and entropy coefficient as pure functions of
/// progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    pub total_steps: u64,
    pub beta0: f64,
    /// Fraction of `total_steps` at which `beta` starts to fall.
    pub anneal_start: f64,
    /// Fraction of `total_steps` over which `beta` falls to zero.
    pub anneal_len: f64,
    pub entropy0: f64,
    /// Per-update multiplicative decay.
    pub entropy_decay: f64,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            total_steps: 2_000_000,
            beta0: 0.2,
            anneal_start: 25.0 / 110.0,
            anneal_len: 5.0 / 110.0,
            entropy0: 0.1,
            entropy_decay: 0.99,
        }
    }
}

impl Schedules {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidArgument(format!("schedules: {m}")));
        if !(0.0..=1.0).contains(&self.beta0) {
            return bad("beta0 outside [0, 1]");
        }
        if self.anneal_start < 0.0 || self.anneal_len < 0.0 {
            return bad("anneal fractions must be non-negative");
        }
        if self.entropy0 < 0.0 || !(0.0..=1.0).contains(&self.entropy_decay) {
            return bad("entropy schedule out of range");
        }
        Ok(())
    }

    /// Uniform-mixing coefficient at environment step `step`.
    pub fn beta(&self, step: u64) -> f64 {
        let start = self.anneal_start * self.total_steps as f64;
        let len = self.anneal_len * self.total_steps as f64;
        let s = step as f64;
        if s <= start {
            self.beta0
        } else if len <= 0.0 || s >= start + len {
            0.0
        } else {
            self.beta0 * (1.0 - (s - start) / len)
        }
    }

    /// Entropy coefficient for PPO update number `update` (0-based).
    pub fn entropy_coef(&self, update: u64) -> f64 {
        self.entropy0 * self.entropy_decay.powf(update as f64)
    }
}
