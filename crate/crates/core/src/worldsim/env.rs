use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Action, Intrinsics, Pose, FORWARD_STEP};
use crate::error::{CoreError, Result};
use crate::image::Image;

use super::render::{render_with, Sphere};
use super::scene::Scene;
use super::task::{
    check_imagegoal_success, place_apples, task_reward, Apple, Event, Goal, TaskMode, TaskRewards,
    TaskState, APPLE_RADIUS,
};

/// Embodiment sphere radius in meters.
pub const BODY_RADIUS: f64 = 0.2;
const COLLISION_SUBSTEPS: usize = 5;

/// One privileged observation: RGB, depth, pose and the action that led here.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rgb: Image,
    pub depth: Image,
    pub pose: Pose,
    pub prev_action: Action,
    pub collided: bool,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
    pub apples: usize,
    pub rewards: TaskRewards,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            max_steps: 1024,
            apples: 5,
            rewards: TaskRewards::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub frame: Frame,
    pub reward_ext: f64,
    pub events: Vec<Event>,
    /// Task completed (all apples picked or goal reached).
    pub terminated: bool,
    /// Step cap reached.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// True if a disc of `radius` centred at `(x, y)` overlaps any wall cell.
pub fn collides(scene: &Scene, x: f64, y: f64, radius: f64) -> bool {
    let (cx, cy) = (x.floor() as i64, y.floor() as i64);
    for wy in cy - 1..=cy + 1 {
        for wx in cx - 1..=cx + 1 {
            if !scene.is_wall(wx, wy) {
                continue;
            }
            let px = x.clamp(wx as f64, wx as f64 + 1.0);
            let py = y.clamp(wy as f64, wy as f64 + 1.0);
            if (x - px).powi(2) + (y - py).powi(2) < radius * radius {
                return true;
            }
        }
    }
    false
}

/// Deterministic dynamics: returns the next pose and whether the move was
/// blocked. A blocked move leaves the pose unchanged.
pub fn apply_action(scene: &Scene, pose: &Pose, action: Action) -> (Pose, bool) {
    match action {
        Action::Forward => {
            let (c, s) = pose.forward_dir();
            for k in 1..=COLLISION_SUBSTEPS {
                let f = FORWARD_STEP * k as f64 / COLLISION_SUBSTEPS as f64;
                if collides(scene, pose.x + f * c, pose.y + f * s, BODY_RADIUS) {
                    return (*pose, true);
                }
            }
            (pose.intended(action), false)
        }
        _ => (pose.intended(action), false),
    }
}

/// Uniform free cell, offset inside it, and a random heading.
pub fn random_pose(scene: &Scene, rng: &mut impl Rng) -> Pose {
    let cells = scene.free_cells();
    let (cx, cy) = cells[rng.random_range(0..cells.len())];
    Pose::new(
        cx as f64 + rng.random_range(0.25..=0.75),
        cy as f64 + rng.random_range(0.25..=0.75),
        rng.random_range(0..crate::camera::HEADINGS),
    )
}

/// One embodied episode in a fixed scene.
#[derive(Debug, Clone)]
pub struct Env {
    scene: Arc<Scene>,
    cfg: EnvConfig,
    intr: Intrinsics,
    pose: Pose,
    task: TaskState,
    t: usize,
    done: bool,
}

impl Env {
    pub fn new(scene: Arc<Scene>, cfg: EnvConfig) -> Self {
        let intr = Intrinsics::new(cfg.width, cfg.height);
        let pose = {
            let (x, y) = scene.free_cells()[0];
            Pose::new(x as f64 + 0.5, y as f64 + 0.5, 0)
        };
        Self {
            scene,
            cfg,
            intr,
            pose,
            task: TaskState::explore(),
            t: 0,
            done: true,
        }
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intr
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn task(&self) -> &TaskState {
        &self.task
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Start an episode at a seeded random spawn.
    pub fn reset(&mut self, episode_seed: u64, mode: TaskMode) -> Result<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            episode_seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ self.scene.seed(),
        );
        let pose = random_pose(&self.scene, &mut rng);
        let mut task = TaskState {
            mode,
            apples: Vec::new(),
            goal: None,
            rewards: self.cfg.rewards,
        };
        match mode {
            TaskMode::Explore => {}
            TaskMode::Apples => {
                task.apples = place_apples(&self.scene, self.cfg.apples, rng.random())?
                    .into_iter()
                    .map(|position| Apple {
                        position,
                        picked: false,
                    })
                    .collect();
            }
            TaskMode::ImageGoal => {
                let goal_pose = random_pose(&self.scene, &mut rng);
                let view = render_with(&self.scene, &goal_pose, &self.intr, &[])?;
                task.goal = Some(Goal {
                    frame: Frame {
                        rgb: view.rgb,
                        depth: view.depth,
                        pose: goal_pose,
                        prev_action: Action::Pause,
                        collided: false,
                        step: 0,
                    },
                });
            }
        }
        self.reset_to(pose, task)
    }

    /// Start an episode at an explicit pose with an explicit task state.
    pub fn reset_to(&mut self, pose: Pose, task: TaskState) -> Result<Frame> {
        if collides(&self.scene, pose.x, pose.y, BODY_RADIUS) {
            return Err(CoreError::PoseInWall { x: pose.x, y: pose.y });
        }
        self.pose = pose;
        self.task = task;
        self.t = 0;
        self.done = false;
        self.observe(Action::Pause, false)
    }

    fn spheres(&self) -> Vec<Sphere> {
        self.task
            .apples
            .iter()
            .filter(|a| !a.picked)
            .map(|a| Sphere {
                center: a.position,
                radius: APPLE_RADIUS,
                color: [0.9, 0.12, 0.1],
            })
            .collect()
    }

    fn observe(&self, prev_action: Action, collided: bool) -> Result<Frame> {
        let view = render_with(&self.scene, &self.pose, &self.intr, &self.spheres())?;
        Ok(Frame {
            rgb: view.rgb,
            depth: view.depth,
            pose: self.pose,
            prev_action,
            collided,
            step: self.t,
        })
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(CoreError::EpisodeEnded);
        }
        let (pose, collided) = apply_action(&self.scene, &self.pose, action);
        self.pose = pose;
        self.t += 1;
        let mut events = Vec::new();
        if collided {
            events.push(Event::Collision);
        }
        let mut terminated = false;
        match self.task.mode {
            TaskMode::Explore => {}
            TaskMode::Apples => {
                let r = self.task.rewards.pick_radius;
                let nearest = self
                    .task
                    .apples
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| !a.picked)
                    .map(|(i, a)| {
                        let d = ((a.position.x - pose.x).powi(2) + (a.position.y - pose.y).powi(2)).sqrt();
                        (i, d)
                    })
                    .filter(|&(_, d)| d <= r)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((i, _)) = nearest {
                    self.task.apples[i].picked = true;
                    events.push(Event::ApplePicked(i));
                }
                terminated = self.task.apples.iter().all(|a| a.picked);
            }
            TaskMode::ImageGoal => {
                let goal = self.task.goal.as_ref().ok_or_else(|| {
                    CoreError::Task("image_goal episode without a goal".into())
                })?;
                if check_imagegoal_success(&self.scene, &pose, goal, &self.intr, &self.task.rewards) {
                    events.push(Event::GoalReached);
                    terminated = true;
                }
            }
        }
        let reward_ext = match self.task.mode {
            TaskMode::Explore => 0.0,
            _ => task_reward(&self.task, &events)?,
        };
        let truncated = !terminated && self.t >= self.cfg.max_steps;
        self.done = terminated || truncated;
        let frame = self.observe(action, collided)?;
        Ok(StepResult {
            frame,
            reward_ext,
            events,
            terminated,
            truncated,
        })
    }
}
