use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Action, HEADINGS};
use crate::error::Result;
use crate::image::Image;
use crate::policy::{sample_action, EpisodeMemory, Policy};
use crate::worldsim::{Frame, Scene};

/// Anything that picks actions from observations during evaluation.
pub trait Explorer {
    fn name(&self) -> &str;
    fn begin(&mut self, scene: &Scene, first: &Frame, goal: Option<&Image>, seed: u64) -> Result<()>;
    fn act(&mut self, frame: &Frame) -> Result<Action>;
}

/// Uniform random actions.
#[derive(Debug, Clone)]
pub struct RandomExplorer {
    rng: ChaCha8Rng,
}

impl Default for RandomExplorer {
    fn default() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Explorer for RandomExplorer {
    fn name(&self) -> &str {
        "random_policy"
    }

    fn begin(&mut self, _: &Scene, _: &Frame, _: Option<&Image>, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn act(&mut self, _: &Frame) -> Result<Action> {
        Ok(Action::ALL[self.rng.random_range(0..Action::COUNT)])
    }
}

const QUARTER: u8 = HEADINGS / 4;

/// Right-hand wall following on the cell grid with privileged map access,
/// spinning a full turn in every newly entered cell.
#[derive(Debug, Clone, Default)]
pub struct WallFollower {
    walls: Vec<bool>,
    width: usize,
    height: usize,
    queue: Vec<Action>,
    visited: Vec<bool>,
}

impl WallFollower {
    fn wall(&self, x: i64, y: i64) -> bool {
        x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 || self.walls[y as usize * self.width + x as usize]
    }

    fn turns(from: u8, to: u8) -> Vec<Action> {
        crate::worldsim::turn_actions(from, to)
    }

    /// Plan the next move from a cardinal heading at cell `(x, y)`.
    fn plan(&mut self, frame: &Frame) {
        let (x, y) = (frame.pose.x.floor() as i64, frame.pose.y.floor() as i64);
        let h = frame.pose.heading;
        if h % QUARTER != 0 {
            let target = ((h + QUARTER / 2) / QUARTER * QUARTER) % HEADINGS;
            self.queue.extend(Self::turns(h, target));
            return;
        }
        let cell = y as usize * self.width + x as usize;
        if !self.visited[cell] {
            self.visited[cell] = true;
            self.queue.extend(vec![Action::TurnLeft; HEADINGS as usize]);
        }
        let dir = |q: u8| -> (i64, i64) {
            match q % 4 {
                0 => (1, 0),
                1 => (0, 1),
                2 => (-1, 0),
                _ => (0, -1),
            }
        };
        let q = h / QUARTER;
        // right, straight, left, back
        for k in [3u8, 0, 1, 2] {
            let nq = (q + k) % 4;
            let (dx, dy) = dir(nq);
            if !self.wall(x + dx, y + dy) {
                self.queue.extend(Self::turns(h, nq * QUARTER));
                self.queue.extend(vec![Action::Forward; 4]);
                return;
            }
        }
        self.queue.push(Action::Pause);
    }
}

impl Explorer for WallFollower {
    fn name(&self) -> &str {
        "wall_follower"
    }

    fn begin(&mut self, scene: &Scene, _: &Frame, _: Option<&Image>, _: u64) -> Result<()> {
        self.walls = scene.walls().to_vec();
        self.width = scene.width();
        self.height = scene.height();
        self.visited = vec![false; self.walls.len()];
        self.queue.clear();
        Ok(())
    }

    fn act(&mut self, frame: &Frame) -> Result<Action> {
        if self.queue.is_empty() {
            self.plan(frame);
        }
        Ok(self.queue.remove(0))
    }
}

/// A trained policy sampled with a fixed mixing coefficient.
#[derive(Debug, Clone)]
pub struct PolicyExplorer<'a> {
    policy: &'a Policy,
    label: String,
    beta: f64,
    memory: EpisodeMemory,
    goal: Option<Image>,
    rng: ChaCha8Rng,
}

impl<'a> PolicyExplorer<'a> {
    pub fn new(policy: &'a Policy, label: impl Into<String>, beta: f64) -> Self {
        Self {
            policy,
            label: label.into(),
            beta,
            memory: policy.new_memory(),
            goal: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Explorer for PolicyExplorer<'_> {
    fn name(&self) -> &str {
        &self.label
    }

    fn begin(&mut self, _: &Scene, _: &Frame, goal: Option<&Image>, seed: u64) -> Result<()> {
        self.memory = self.policy.new_memory();
        self.goal = goal.cloned();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn act(&mut self, frame: &Frame) -> Result<Action> {
        let out = self.policy.step(&mut self.memory, &frame.rgb, frame.prev_action, self.goal.as_ref())?;
        Ok(sample_action(&out, self.beta, &mut self.rng)?.0)
    }
}
