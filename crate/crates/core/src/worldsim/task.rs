use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Intrinsics, Pose, Vec3};
use crate::error::{CoreError, Result};

use super::env::Frame;
use super::render::back_project;
use super::scene::Scene;

/// Height of apple centres above the floor.
pub const APPLE_HEIGHT: f64 = 1.0;
pub const APPLE_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskMode {
    Explore,
    Apples,
    ImageGoal,
}

impl TaskMode {
    pub fn parse(s: &str) -> Result<TaskMode> {
        match s {
            "explore" => Ok(TaskMode::Explore),
            "apples" => Ok(TaskMode::Apples),
            "image_goal" => Ok(TaskMode::ImageGoal),
            other => Err(CoreError::Task(format!("unknown task mode `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskMode::Explore => "explore",
            TaskMode::Apples => "apples",
            TaskMode::ImageGoal => "image_goal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskRewards {
    pub pick: f64,
    pub goal: f64,
    pub step_penalty: f64,
    pub pick_radius: f64,
    pub goal_radius: f64,
    /// Fraction of goal points that must be visible for success.
    pub goal_visible_fraction: f64,
}

impl Default for TaskRewards {
    fn default() -> Self {
        Self {
            pick: 1.0,
            goal: 10.0,
            step_penalty: 0.001,
            pick_radius: 0.5,
            goal_radius: 1.5,
            goal_visible_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Apple {
    pub position: Vec3,
    pub picked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub frame: Frame,
}

impl Goal {
    pub fn pose(&self) -> Pose {
        self.frame.pose
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Collision,
    ApplePicked(usize),
    GoalReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub mode: TaskMode,
    pub apples: Vec<Apple>,
    pub goal: Option<Goal>,
    pub rewards: TaskRewards,
}

impl TaskState {
    pub fn explore() -> Self {
        Self {
            mode: TaskMode::Explore,
            apples: Vec::new(),
            goal: None,
            rewards: TaskRewards::default(),
        }
    }

    pub fn picked(&self) -> usize {
        self.apples.iter().filter(|a| a.picked).count()
    }
}

/// Extrinsic reward for one step's events.
pub fn task_reward(state: &TaskState, events: &[Event]) -> Result<f64> {
    let r = &state.rewards;
    match state.mode {
        TaskMode::Explore => Err(CoreError::Task(
            "explore mode has no task reward; use the curiosity reward".into(),
        )),
        TaskMode::Apples => {
            let picks = events
                .iter()
                .filter(|e| matches!(e, Event::ApplePicked(_)))
                .count();
            match picks {
                0 => Ok(-r.step_penalty),
                1 => Ok(r.pick),
                n => Err(CoreError::Task(format!("{n} picks in one step"))),
            }
        }
        TaskMode::ImageGoal => {
            if events.contains(&Event::GoalReached) {
                Ok(r.goal)
            } else {
                Ok(-r.step_penalty)
            }
        }
    }
}

fn cell_center(c: (usize, usize)) -> Vec3 {
    Vec3::new(c.0 as f64 + 0.5, c.1 as f64 + 0.5, APPLE_HEIGHT)
}

/// Apple positions at free-cell centres: the first uniform, each later
/// one drawn with probability proportional to its distance to the
/// nearest apple already placed.
pub fn place_apples(scene: &Scene, k: usize, seed: u64) -> Result<Vec<Vec3>> {
    let cells = scene.free_cells();
    if k == 0 {
        return Err(CoreError::Task("apple count must be at least 1".into()));
    }
    if k > cells.len() {
        return Err(CoreError::Task(format!(
            "{k} apples requested but the scene has {} free cells",
            cells.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA991_E500);
    let centers: Vec<Vec3> = cells.iter().map(|&c| cell_center(c)).collect();
    let mut chosen = vec![rng.random_range(0..centers.len())];
    let mut min_dist: Vec<f64> = centers
        .iter()
        .map(|c| (c - centers[chosen[0]]).norm())
        .collect();
    while chosen.len() < k {
        let total: f64 = min_dist.iter().sum();
        let mut u = rng.random_range(0.0..total);
        let mut pick = min_dist.len() - 1;
        for (i, &d) in min_dist.iter().enumerate() {
            if u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        // guard against rounding onto an already-chosen cell
        if min_dist[pick] == 0.0 {
            pick = (0..min_dist.len())
                .rev()
                .find(|&i| min_dist[i] > 0.0)
                .expect("unchosen cell remains");
        }
        chosen.push(pick);
        for (i, c) in centers.iter().enumerate() {
            min_dist[i] = min_dist[i].min((c - centers[pick]).norm());
        }
    }
    Ok(chosen.into_iter().map(|i| centers[i]).collect())
}

/// Goal reached when the agent is within the goal radius and at least the
/// required fraction of the goal view's surface points are in its frustum
/// and unoccluded.
pub fn check_imagegoal_success(
    scene: &Scene,
    pose: &Pose,
    goal: &Goal,
    intr: &Intrinsics,
    rewards: &TaskRewards,
) -> bool {
    let dist = pose.distance(&goal.pose());
    if dist > rewards.goal_radius {
        return false;
    }
    let fraction = visible_fraction(scene, pose, &goal.frame, intr, 2);
    goal_rule(fraction, dist, rewards)
}

/// Both bounds are inclusive.
pub fn goal_rule(visible_fraction: f64, distance: f64, rewards: &TaskRewards) -> bool {
    visible_fraction >= rewards.goal_visible_fraction && distance <= rewards.goal_radius
}

/// Share of a frame's back-projected points visible from `pose`.
pub fn visible_fraction(scene: &Scene, pose: &Pose, frame: &Frame, intr: &Intrinsics, stride: usize) -> f64 {
    let points = back_project(&frame.depth, &frame.pose, intr, stride);
    if points.is_empty() {
        return 0.0;
    }
    let origin = pose.position();
    let visible = points
        .iter()
        .filter(|p| {
            let cam = pose.world_to_cam(p);
            let Some((u, v)) = intr.project(&cam) else {
                return false;
            };
            if !intr.contains(u, v) {
                return false;
            }
            let delta = *p - origin;
            let dist = delta.norm();
            let hit = scene.raycast(&origin, &(delta / dist));
            hit.t >= dist - 1e-3 * (1.0 + dist)
        })
        .count();
    visible as f64 / points.len() as f64
}
