//! Intrinsic reward from forward-model prediction error, the splat-based
//! episode driver, the latent ICM baseline, and reward trace output.

mod driver;
mod icm;
mod reward;
mod trace;

pub use driver::{CuriosityStep, SplatCuriosity};
pub use icm::{IcmConfig, IcmModel, IcmTransition};
pub use reward::{prediction_error, reward_from_error, RewardConfig};
pub use trace::{RewardSource, RewardTrace};
