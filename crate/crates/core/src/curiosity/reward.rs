use rbc_grad::image::{avg_pool, blur};

use crate::error::{CoreError, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Odd Gaussian kernel size.
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub downsample: usize,
    pub tau: f64,
    pub r_new: f64,
    pub r_old: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            blur_kernel: 5,
            blur_sigma: 1.0,
            downsample: 4,
            tau: 0.01,
            r_new: 0.5,
            r_old: -2e-4,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidArgument(format!("reward config: {m}")));
        if self.blur_kernel % 2 == 0 {
            return bad(format!("blur_kernel {} must be odd", self.blur_kernel));
        }
        if self.blur_sigma <= 0.0 {
            return bad("blur_sigma must be positive".into());
        }
        if self.downsample == 0 {
            return bad("downsample must be at least 1".into());
        }
        if self.tau <= 0.0 {
            return bad("tau must be positive".into());
        }
        if self.r_new <= 0.0 {
            return bad("r_new must be positive".into());
        }
        if self.r_old > 0.0 {
            return bad("r_old must not be positive".into());
        }
        Ok(())
    }
}

/// Mean squared color distance between low-passed, downsampled images.
///
/// Blur and pooling are linear, so they are applied once to the
/// difference image; this keeps the metric exactly symmetric.
pub fn prediction_error(pred: &Image, obs: &Image, cfg: &RewardConfig) -> Result<f64> {
    if pred.shape() != obs.shape() {
        return Err(CoreError::ShapeMismatch {
            op: "prediction_error",
            lhs: pred.shape().to_vec(),
            rhs: obs.shape().to_vec(),
        });
    }
    let [h, w, c] = pred.shape();
    let s = cfg.downsample;
    if h % s != 0 || w % s != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "image {h}x{w} is not divisible by downsample factor {s}"
        )));
    }
    let diff: Vec<f64> = pred
        .data
        .iter()
        .zip(&obs.data)
        .map(|(a, b)| *a as f64 - *b as f64)
        .collect();
    let blurred = blur(&diff, h, w, c, cfg.blur_kernel, cfg.blur_sigma);
    let pooled = avg_pool(&blurred, h, w, c, s);
    let pixels = (h / s) * (w / s);
    let total: f64 = pooled.iter().map(|d| d * d).sum();
    Ok(total / pixels as f64)
}

/// Two-valued reward: strictly above `tau` counts as novel.
pub fn reward_from_error(e: f64, cfg: &RewardConfig) -> f64 {
    if e > cfg.tau {
        cfg.r_new
    } else {
        cfg.r_old
    }
}
