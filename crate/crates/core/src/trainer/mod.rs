//! Mixed-behaviour PPO: rollout collection, advantage estimation, clipped
//! updates, annealing schedules and the training loops.

mod gae;
mod ppo;
mod rollout;
mod schedule;

pub use gae::{compute_gae, gae_with_bootstrap, normalize};
pub use ppo::{
    batch_ratios, clipped_objective, minibatch_loss, minibatches, ppo_ratio, ppo_update, LossTerms, PpoConfig,
    PpoStats,
};
pub use rollout::{
    collect_rollout, CollectOptions, EpisodeSummary, RolloutBatch, Segment, StepRecord, Trajectory, Worker,
    WorkerConfig,
};
pub use schedule::Schedules;
