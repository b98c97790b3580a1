use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{Intrinsics, Pose};
use crate::error::{CoreError, Result};
use crate::splatmem::{InsertStats, RenderResult, SplatCloud, SplatConfig};
use crate::worldsim::Frame;

use super::reward::{prediction_error, reward_from_error, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuriosityStep {
    pub error: f64,
    pub reward: f64,
    pub inserted: InsertStats,
    /// Mean refinement loss when a refinement ran this step.
    pub refine_loss: Option<f64>,
}

/// Per-episode driver around one splat cloud.
///
/// Each step is a prediction at the next pose from the current cloud,
/// followed by observing the realized frame: error and reward are computed
/// against the prediction, then the frame is inserted and the cloud is
/// refined on its cadence. A prediction for a frame that has already been
/// inserted is rejected.
#[derive(Debug, Clone)]
pub struct SplatCuriosity {
    cloud: SplatCloud,
    reward: RewardConfig,
    rng: ChaCha8Rng,
    inserted: u64,
    pending: Option<(u64, Pose, RenderResult)>,
}

impl SplatCuriosity {
    pub fn new(splat: SplatConfig, intr: Intrinsics, reward: RewardConfig, seed: u64) -> Self {
        Self {
            cloud: SplatCloud::new(splat, intr),
            reward,
            rng: ChaCha8Rng::seed_from_u64(seed),
            inserted: 0,
            pending: None,
        }
    }

    pub fn cloud(&self) -> &SplatCloud {
        &self.cloud
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    /// Frames inserted this episode.
    pub fn frames_seen(&self) -> u64 {
        self.inserted
    }

    /// Reset the cloud and ingest the episode's first frame.
    pub fn begin_episode(&mut self, first: &Frame, seed: u64) -> InsertStats {
        self.cloud.clear();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.inserted = 0;
        self.pending = None;
        self.ingest(first, None).0
    }

    /// Render the current reconstruction at the pose frame `step` will be
    /// observed from.
    pub fn predict(&mut self, step: u64, next_pose: &Pose) -> Result<&RenderResult> {
        if step < self.inserted {
            return Err(CoreError::PredictAfterInsert(step));
        }
        let render = self.cloud.predict(next_pose);
        self.pending = Some((step, *next_pose, render));
        Ok(&self.pending.as_ref().expect("just set").2)
    }

    /// Score the realized frame against the pending prediction, then insert
    /// it and refine on cadence.
    pub fn observe(&mut self, frame: &Frame) -> Result<CuriosityStep> {
        let (step, pose, pred) = self.pending.take().ok_or_else(|| {
            CoreError::InvalidArgument("observe called without a prediction".into())
        })?;
        if step != self.inserted || pose != frame.pose {
            return Err(CoreError::InvalidArgument(format!(
                "prediction was for frame {step} at {pose:?}, observed frame {} at {:?}",
                self.inserted, frame.pose
            )));
        }
        let error = prediction_error(&pred.rgb, &frame.rgb, &self.reward)?;
        let reward = reward_from_error(error, &self.reward);
        let (inserted, refine_loss) = self.ingest(frame, Some(&pred));
        Ok(CuriosityStep {
            error,
            reward,
            inserted,
            refine_loss,
        })
    }

    /// Predict at the frame's own pose and observe it.
    pub fn step(&mut self, frame: &Frame) -> Result<CuriosityStep> {
        let step = self.inserted;
        self.predict(step, &frame.pose)?;
        self.observe(frame)
    }

    fn ingest(&mut self, frame: &Frame, pred: Option<&RenderResult>) -> (InsertStats, Option<f64>) {
        let stats = self.cloud.insert_frame(frame, pred);
        self.inserted += 1;
        let cfg = self.cloud.config().clone();
        let mut loss = None;
        if cfg.refine_every > 0 && self.inserted % cfg.refine_every as u64 == 0 {
            loss = self.cloud.refine(cfg.refine_views, &mut self.rng).ok();
            self.cloud.prune(cfg.opacity_floor);
        }
        (stats, loss)
    }
}
