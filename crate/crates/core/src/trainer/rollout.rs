use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{Action, Intrinsics};
use crate::curiosity::{IcmModel, IcmTransition, RewardConfig, RewardSource, SplatCuriosity};
use crate::error::{io_err, CoreError, Result};
use crate::image::Image;
use crate::policy::{sample_action, EpisodeMemory, Policy};
use crate::seeds::{self, TAG_CURIOSITY, TAG_EPISODE, TAG_SAMPLING, TAG_SCENE};
use crate::splatmem::SplatConfig;
use crate::worldsim::{apply_action, Env, EnvConfig, Frame, Scene, SceneParams, TaskMode};

/// Everything a worker needs to run episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    pub seed: u64,
    pub maze_width: usize,
    pub maze_height: usize,
    pub scene: SceneParams,
    pub env: EnvConfig,
    pub task: TaskMode,
    pub source: RewardSource,
    pub splat: SplatConfig,
    pub reward: RewardConfig,
    /// Fixed scene seeds to draw from instead of fresh procedural ones.
    pub scene_pool: Vec<u64>,
}

impl WorkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source == RewardSource::Task && self.task == TaskMode::Explore {
            return Err(CoreError::InvalidArgument(
                "task reward needs a task; explore mode has none".into(),
            ));
        }
        self.reward.validate()
    }
}

/// One recorded environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Observation the action was chosen from.
    pub rgb: Arc<Image>,
    pub prev_action: Action,
    pub action: Action,
    pub behavior_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Value of the successor state (0 after a terminal step).
    pub next_value: f64,
    pub terminal: bool,
    /// Last step of an episode, for any reason.
    pub boundary: bool,
    /// Curiosity prediction error, when the splat model scored this step.
    pub error: Option<f64>,
}

/// Consecutive steps of one episode that share a memory snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: EpisodeMemory,
    pub goal: Option<Arc<Image>>,
    /// Index range into the owning trajectory's steps.
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub segments: Vec<Segment>,
}

/// Totals of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub worker: usize,
    pub steps: usize,
    pub curiosity: f64,
    pub task_reward: f64,
    pub picks: usize,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub episodes: Vec<EpisodeSummary>,
    pub icm: Vec<IcmTransition>,
    /// Filled by [`RolloutBatch::compute_advantages`], flattened in
    /// trajectory order.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64, normalize: bool) {
        self.advantages.clear();
        self.returns.clear();
        for tr in &self.trajectories {
            let col = |f: fn(&StepRecord) -> f64| tr.steps.iter().map(f).collect::<Vec<_>>();
            let flags = |f: fn(&StepRecord) -> bool| tr.steps.iter().map(f).collect::<Vec<_>>();
            let (adv, ret) = super::gae::gae_with_bootstrap(
                &col(|s| s.reward),
                &col(|s| s.value),
                &col(|s| s.next_value),
                &flags(|s| s.terminal),
                &flags(|s| s.boundary),
                gamma,
                lambda,
            );
            self.advantages.extend(adv);
            self.returns.extend(ret);
        }
        if normalize {
            super::gae::normalize(&mut self.advantages);
        }
    }

    /// Offset of each trajectory in the flattened per-step arrays.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.trajectories
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.steps.len();
                o
            })
            .collect()
    }

    /// Per-step CSV for post-mortem inspection.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
        let mut lines = String::from("worker,t,action,behavior_prob,reward,value,next_value,terminal,boundary,advantage,return\n");
        let offsets = self.offsets();
        for (w, tr) in self.trajectories.iter().enumerate() {
            for (t, s) in tr.steps.iter().enumerate() {
                let i = offsets[w] + t;
                lines.push_str(&format!(
                    "{w},{t},{},{},{},{},{},{},{},{},{}\n",
                    s.action.name(),
                    s.behavior_prob,
                    s.reward,
                    s.value,
                    s.next_value,
                    s.terminal,
                    s.boundary,
                    self.advantages.get(i).copied().unwrap_or(f64::NAN),
                    self.returns.get(i).copied().unwrap_or(f64::NAN),
                ));
            }
        }
        out.write_all(lines.as_bytes()).map_err(io_err(path))?;
        out.flush().map_err(io_err(path))
    }
}

/// A single environment with its episode state.
pub struct Worker {
    pub id: usize,
    cfg: WorkerConfig,
    env: Env,
    frame: Frame,
    memory: EpisodeMemory,
    curiosity: Option<SplatCuriosity>,
    goal: Option<Arc<Image>>,
    /// Update index at which the current run of episodes started.
    epoch: u64,
    episode: u64,
    ep_steps: usize,
    ep_curiosity: f64,
    ep_task: f64,
    ep_picks: usize,
}

impl Worker {
    pub fn new(id: usize, cfg: WorkerConfig, policy: &Policy, epoch: u64) -> Result<Self> {
        cfg.validate()?;
        let pc = policy.config();
        if pc.height != cfg.env.height || pc.width != cfg.env.width {
            return Err(CoreError::InvalidArgument(format!(
                "policy resolution {}x{} differs from render resolution {}x{}",
                pc.height, pc.width, cfg.env.height, cfg.env.width
            )));
        }
        let intr = Intrinsics::new(cfg.env.width, cfg.env.height);
        let curiosity = (cfg.source == RewardSource::Splat)
            .then(|| SplatCuriosity::new(cfg.splat.clone(), intr, cfg.reward, 0));
        let scene = Arc::new(Scene::generate(1, cfg.maze_width, cfg.maze_height, &cfg.scene)?);
        let mut env = Env::new(scene, cfg.env);
        let frame = env.reset(0, cfg.task)?;
        let mut w = Self {
            id,
            cfg,
            env,
            frame,
            memory: policy.new_memory(),
            curiosity,
            goal: None,
            epoch,
            episode: 0,
            ep_steps: 0,
            ep_curiosity: 0.0,
            ep_task: 0.0,
            ep_picks: 0,
        };
        w.begin_episode(policy)?;
        Ok(w)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Start a fresh run of episodes, as after a checkpoint.
    pub fn restart(&mut self, policy: &Policy, epoch: u64) -> Result<()> {
        self.epoch = epoch;
        self.episode = 0;
        self.begin_episode(policy)
    }

    fn begin_episode(&mut self, policy: &Policy) -> Result<()> {
        let coords = [self.cfg.seed, self.id as u64, self.epoch, self.episode];
        let scene_seed = if self.cfg.scene_pool.is_empty() {
            seeds::training_scene(&[TAG_SCENE, coords[0], coords[1], coords[2], coords[3]])
        } else {
            let k = seeds::derive(&[TAG_SCENE, coords[0], coords[1], coords[2], coords[3]]);
            self.cfg.scene_pool[(k % self.cfg.scene_pool.len() as u64) as usize]
        };
        let scene = Scene::generate(scene_seed, self.cfg.maze_width, self.cfg.maze_height, &self.cfg.scene)?;
        self.env = Env::new(Arc::new(scene), self.cfg.env);
        self.frame = self
            .env
            .reset(seeds::derive(&[TAG_EPISODE, coords[0], coords[1], coords[2], coords[3]]), self.cfg.task)?;
        self.goal = self.env.task().goal.as_ref().map(|g| Arc::new(g.frame.rgb.clone()));
        self.memory = policy.new_memory();
        if let Some(c) = self.curiosity.as_mut() {
            c.begin_episode(&self.frame, seeds::derive(&[TAG_CURIOSITY, coords[0], coords[1], coords[2], coords[3]]));
        }
        self.ep_steps = 0;
        self.ep_curiosity = 0.0;
        self.ep_task = 0.0;
        self.ep_picks = 0;
        Ok(())
    }

    /// Value of the current state without advancing the episode memory.
    fn peek_value(&self, policy: &Policy) -> Result<f64> {
        let mut mem = self.memory.clone();
        let out = policy.step(&mut mem, &self.frame.rgb, self.frame.prev_action, self.goal.as_deref())?;
        Ok(out.value as f64)
    }
}

/// Options of one collection phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectOptions {
    pub horizon: usize,
    /// Longest run of steps sharing one memory snapshot.
    pub chunk: usize,
    pub beta: f64,
    /// Update index, for seeding the sampling streams.
    pub update: u64,
}

/// Run every worker for `horizon` steps under the behavior mixture.
pub fn collect_rollout(
    workers: &mut [Worker],
    policy: &Policy,
    icm: Option<&IcmModel>,
    opts: CollectOptions,
) -> Result<RolloutBatch> {
    if opts.chunk == 0 || opts.horizon == 0 {
        return Err(CoreError::InvalidArgument("horizon and chunk must be positive".into()));
    }
    let mut batch = RolloutBatch {
        trajectories: vec![Trajectory::default(); workers.len()],
        ..RolloutBatch::default()
    };
    for (w, tr) in workers.iter_mut().zip(batch.trajectories.iter_mut()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[TAG_SAMPLING, w.cfg.seed, w.id as u64, opts.update]));
        for t in 0..opts.horizon {
            let open_new = match tr.segments.last() {
                None => true,
                Some(seg) => seg.end - seg.begin >= opts.chunk || tr.steps[seg.end - 1].boundary,
            };
            if open_new {
                tr.segments.push(Segment {
                    start: w.memory.clone(),
                    goal: w.goal.clone(),
                    begin: t,
                    end: t,
                });
            }
            let rgb = Arc::new(w.frame.rgb.clone());
            let prev_action = w.frame.prev_action;
            let out = policy.step(&mut w.memory, &rgb, prev_action, w.goal.as_deref())?;
            let (action, behavior_prob) = sample_action(&out, opts.beta, &mut rng)?;

            let mut error = None;
            let mut icm_pre = None;
            match w.cfg.source {
                RewardSource::Splat => {
                    let c = w.curiosity.as_mut().expect("splat source has a model");
                    let (next_pose, _) = apply_action(w.env.scene(), &w.frame.pose, action);
                    c.predict(c.frames_seen(), &next_pose)?;
                }
                RewardSource::Icm => {
                    let m = icm.ok_or_else(|| CoreError::InvalidArgument("icm source without a model".into()))?;
                    icm_pre = Some(m.featurize(&w.frame.rgb)?);
                }
                RewardSource::Task => {}
            }
            let res = w.env.step(action)?;
            let reward = match w.cfg.source {
                RewardSource::Splat => {
                    let c = w.curiosity.as_mut().expect("splat source has a model");
                    let cs = c.observe(&res.frame)?;
                    error = Some(cs.error);
                    w.ep_curiosity += cs.reward;
                    cs.reward
                }
                RewardSource::Icm => {
                    let m = icm.expect("checked above");
                    let tr_icm = IcmTransition {
                        obs: icm_pre.take().expect("featurized above"),
                        action,
                        next_obs: m.featurize(&res.frame.rgb)?,
                    };
                    let r = m.reward(&tr_icm)?;
                    w.ep_curiosity += r;
                    batch.icm.push(tr_icm);
                    r
                }
                RewardSource::Task => res.reward_ext,
            };
            w.ep_task += res.reward_ext;
            w.ep_picks += res
                .events
                .iter()
                .filter(|e| matches!(e, crate::worldsim::Event::ApplePicked(_)))
                .count();
            w.ep_steps += 1;
            let done = res.done();
            w.frame = res.frame;
            let next_value = if res.terminated {
                0.0
            } else if done {
                w.peek_value(policy)?
            } else {
                f64::NAN
            };
            tr.steps.push(StepRecord {
                rgb,
                prev_action,
                action,
                behavior_prob,
                reward,
                value: out.value as f64,
                next_value,
                terminal: res.terminated,
                boundary: done,
                error,
            });
            tr.segments.last_mut().expect("opened above").end = t + 1;
            if done {
                batch.episodes.push(EpisodeSummary {
                    worker: w.id,
                    steps: w.ep_steps,
                    curiosity: w.ep_curiosity,
                    task_reward: w.ep_task,
                    picks: w.ep_picks,
                    success: res.terminated,
                });
                w.episode += 1;
                w.begin_episode(policy)?;
            }
        }
        // successor values inside the horizon come from the next record
        let tail = w.peek_value(policy)?;
        let n = tr.steps.len();
        for t in 0..n {
            if tr.steps[t].next_value.is_nan() {
                tr.steps[t].next_value = if t + 1 < n { tr.steps[t + 1].value } else { tail };
            }
        }
    }
    Ok(batch)
}
