//! Run orchestration: the sectioned run configuration, the RBC1
//! checkpoint container and the training and fine-tuning loops.

mod checkpoint;
mod config;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, MAGIC, VERSION};
pub use config::{
    EvalSection, IcmSection, PolicySection, RenderSection, RewardSection, RunConfig, SceneSection, SplatSection,
    TaskSection, TrainerSection, RUN_DIR_ENV,
};
pub use train::{
    checkpoint_name, latest_checkpoint, load_policy, run_finetune, run_training, MetricsRow, Start, TrainOutcome,
    Trainer,
};
