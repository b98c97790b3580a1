//! Curiosity-driven exploration in procedural maze worlds: a raycast
//! environment, a persistent splat forward model that turns prediction
//! error into reward, a transformer policy with linear-attention memory,
//! mixed-behaviour PPO, and exploration metrics.

pub mod camera;
pub mod curiosity;
pub mod error;
pub mod evalbench;
pub mod image;
pub mod policy;
pub mod run;
pub mod seeds;
pub mod splatmem;
pub mod trainer;
pub mod worldsim;

pub use error::{CheckpointError, CoreError, Result};
