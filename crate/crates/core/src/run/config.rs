use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curiosity::{IcmConfig, RewardConfig, RewardSource};
use crate::error::{io_err, CoreError, Result};
use crate::evalbench::{parse_seeds, EvalConfig, DEFAULT_EVAL_SEEDS};
use crate::policy::{ContextMode, PolicyConfig};
use crate::splatmem::{RasterConfig, SplatConfig};
use crate::trainer::{PpoConfig, Schedules};
use crate::worldsim::{EnvConfig, SceneParams, TaskMode, TaskRewards};

/// Environment variable naming the default output root.
pub const RUN_DIR_ENV: &str = "RBC_RUN_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub maze_width: usize,
    pub maze_height: usize,
    pub room_density: f64,
    pub corridor_density: f64,
    pub min_room: usize,
    pub max_room: usize,
}

impl Default for SceneSection {
    fn default() -> Self {
        let p = SceneParams::default();
        Self {
            maze_width: 16,
            maze_height: 16,
            room_density: p.room_density,
            corridor_density: p.corridor_density,
            min_room: p.min_room,
            max_room: p.max_room,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            width: e.width,
            height: e.height,
            max_steps: e.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// `explore`, `apples` or `image_goal`.
    pub mode: String,
    pub apples: usize,
    pub pick: f64,
    pub goal: f64,
    pub step_penalty: f64,
    pub pick_radius: f64,
    pub goal_radius: f64,
    pub goal_visible_fraction: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        let r = TaskRewards::default();
        Self {
            mode: "explore".into(),
            apples: EnvConfig::default().apples,
            pick: r.pick,
            goal: r.goal,
            step_penalty: r.step_penalty,
            pick_radius: r.pick_radius,
            goal_radius: r.goal_radius,
            goal_visible_fraction: r.goal_visible_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatSection {
    pub insert_stride: usize,
    pub opacity_init: f32,
    pub scale_factor: f64,
    pub max_scale: f64,
    /// Most recent frames kept; 0 keeps the whole episode.
    pub memory_window: usize,
    pub gate: bool,
    pub insert_error: f64,
    pub gate_blur_kernel: usize,
    pub gate_blur_sigma: f64,
    pub gate_downsample: usize,
    pub insert_transmittance: f64,
    pub lr_color: f32,
    pub lr_opacity: f32,
    pub refine_views: usize,
    pub refine_every: usize,
    pub opacity_floor: f32,
    pub tile: usize,
    pub cutoff_sigma: f64,
    pub dilation: f64,
    pub near: f64,
    pub min_transmittance: f64,
    pub background: f64,
}

impl Default for SplatSection {
    fn default() -> Self {
        let s = SplatConfig::default();
        Self {
            insert_stride: s.insert_stride,
            opacity_init: s.opacity_init,
            scale_factor: s.scale_factor,
            max_scale: s.max_scale,
            memory_window: s.memory_window.unwrap_or(0),
            gate: s.gate,
            insert_error: s.insert_error,
            gate_blur_kernel: s.gate_blur_kernel,
            gate_blur_sigma: s.gate_blur_sigma,
            gate_downsample: s.gate_downsample,
            insert_transmittance: s.insert_transmittance,
            lr_color: s.lr_color,
            lr_opacity: s.lr_opacity,
            refine_views: s.refine_views,
            refine_every: s.refine_every,
            opacity_floor: s.opacity_floor,
            tile: s.raster.tile,
            cutoff_sigma: s.raster.cutoff_sigma,
            dilation: s.raster.dilation,
            near: s.raster.near,
            min_transmittance: s.raster.min_transmittance,
            background: s.raster.background,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub downsample: usize,
    pub tau: f64,
    pub r_new: f64,
    pub r_old: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardConfig::default();
        Self {
            blur_kernel: r.blur_kernel,
            blur_sigma: r.blur_sigma,
            downsample: r.downsample,
            tau: r.tau,
            r_new: r.r_new,
            r_old: r.r_old,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcmSection {
    pub latent: usize,
    pub hidden: usize,
    pub input_side: usize,
    pub reward_scale: f64,
    pub reward_clip: f64,
    pub lr: f32,
}

impl Default for IcmSection {
    fn default() -> Self {
        let c = IcmConfig::default();
        Self {
            latent: c.latent,
            hidden: c.hidden,
            input_side: c.input_side,
            reward_scale: c.reward_scale,
            reward_clip: c.reward_clip,
            lr: c.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub patch: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub window: usize,
    pub memory_after: Vec<usize>,
    pub mlp_ratio: usize,
    pub memory_eps: f64,
    pub layer_norm_eps: f64,
    pub patch_positions: bool,
    /// `full`, `ctx1`, `ctx4`, `ctx16`, `actor_ctx1`, `critic_ctx1` or
    /// `rnn_like`.
    pub mode: String,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            patch: p.patch,
            d_model: p.d_model,
            heads: p.heads,
            layers: p.layers,
            window: p.window,
            memory_after: p.memory_after,
            mlp_ratio: p.mlp_ratio,
            memory_eps: p.memory_eps,
            layer_norm_eps: p.layer_norm_eps,
            patch_positions: p.patch_positions,
            mode: p.mode.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub workers: usize,
    pub horizon: usize,
    /// Longest run of steps replayed from one memory snapshot.
    pub chunk: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f32,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub beta0: f64,
    pub anneal_start: f64,
    pub anneal_len: f64,
    pub entropy0: f64,
    pub entropy_decay: f64,
    /// `splat`, `icm` or `task`.
    pub reward_source: String,
    /// Updates between evaluations; 0 disables periodic evaluation.
    pub eval_every: u64,
    /// Updates between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Fine-tuning budget as a fraction of `total_steps`.
    pub finetune_fraction: f64,
    /// Fixed training scene seeds; empty draws a fresh maze per episode.
    pub scene_pool: Vec<u64>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let p = PpoConfig::default();
        let s = Schedules::default();
        Self {
            workers: 1,
            horizon: 128,
            chunk: 32,
            gamma: 0.99,
            lambda: 0.95,
            clip: p.clip,
            value_coef: p.value_coef,
            epochs: p.epochs,
            minibatch: p.minibatch,
            lr: 1e-5,
            max_grad_norm: p.max_grad_norm,
            normalize_advantages: p.normalize_advantages,
            beta0: s.beta0,
            anneal_start: s.anneal_start,
            anneal_len: s.anneal_len,
            entropy0: s.entropy0,
            entropy_decay: s.entropy_decay,
            reward_source: "splat".into(),
            eval_every: 0,
            checkpoint_every: 50,
            finetune_fraction: 8.0 / 110.0,
            scene_pool: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes_per_scene: usize,
    pub horizons: Vec<usize>,
    pub threshold: f64,
    pub gt_points: usize,
    pub stride: usize,
    pub overlay_px: usize,
    /// Seed list file; empty uses the built-in list.
    pub scenes_file: String,
    /// Explicit scene seeds; take precedence over `scenes_file`.
    pub scenes: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            episodes_per_scene: e.episodes_per_scene,
            horizons: e.horizons,
            threshold: e.threshold,
            gt_points: e.gt_points,
            stride: e.stride,
            overlay_px: e.overlay_px,
            scenes_file: String::new(),
            scenes: Vec::new(),
        }
    }
}

/// Every tunable of a run, one TOML section per module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; empty resolves under `$RBC_RUN_DIR` (or `runs`).
    pub run_dir: String,
    pub total_steps: u64,
    pub scene: SceneSection,
    pub render: RenderSection,
    pub task: TaskSection,
    pub splat: SplatSection,
    pub reward: RewardSection,
    pub icm: IcmSection,
    pub policy: PolicySection,
    pub trainer: TrainerSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            run_dir: String::new(),
            total_steps: Schedules::default().total_steps,
            scene: SceneSection::default(),
            render: RenderSection::default(),
            task: TaskSection::default(),
            splat: SplatSection::default(),
            reward: RewardSection::default(),
            icm: IcmSection::default(),
            policy: PolicySection::default(),
            trainer: TrainerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words that are not TOML literals are taken as strings
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Parse a TOML document; missing keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply `section.key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = toml::Value::try_from(self).map_err(|e| CoreError::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CoreError::Config(format!("override {o:?} is not key=value")))?;
            let key = key.trim();
            let path: Vec<&str> = key.split('.').collect();
            let mut node = &mut doc;
            for (i, part) in path.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| CoreError::Config(format!("override {key}: {part} is not a section")))?;
                let slot = table
                    .get_mut(*part)
                    .ok_or_else(|| CoreError::Config(format!("override {key}: unknown key {part:?}")))?;
                if i + 1 == path.len() {
                    *slot = parse_value(raw.trim());
                }
                node = slot;
            }
            Self::deserialize(doc.clone()).map_err(|e| CoreError::Config(format!("override {key}: {e}")))?;
        }
        Self::deserialize(doc).map_err(|e| CoreError::Config(e.to_string()))
    }

    /// Resolved document with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved document, ignoring where it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run_dir.clear();
        Sha256::digest(c.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn resolved_run_dir(&self) -> PathBuf {
        if !self.run_dir.is_empty() {
            return PathBuf::from(&self.run_dir);
        }
        let root = std::env::var_os(RUN_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("run_{}", &self.hash()[..12]))
    }

    pub fn validate(&self) -> Result<()> {
        self.policy_config()?.validate()?;
        self.reward_config().validate()?;
        self.schedules().validate()?;
        self.ppo_config().validate()?;
        if self.task_mode()? == TaskMode::Explore && self.reward_source()? == RewardSource::Task {
            return Err(CoreError::Config("the explore task has no task reward".into()));
        }
        if self.trainer.workers == 0 || self.trainer.horizon == 0 || self.trainer.chunk == 0 {
            return Err(CoreError::Config("trainer workers, horizon and chunk must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.trainer.gamma) || !(0.0..=1.0).contains(&self.trainer.lambda) {
            return Err(CoreError::Config("gamma and lambda must lie in [0, 1]".into()));
        }
        if self.trainer.scene_pool.iter().any(|&s| !crate::seeds::is_training_scene(s)) {
            return Err(CoreError::Config("scene_pool seeds must lie in the training range (top bit set)".into()));
        }
        Ok(())
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            room_density: self.scene.room_density,
            corridor_density: self.scene.corridor_density,
            min_room: self.scene.min_room,
            max_room: self.scene.max_room,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            width: self.render.width,
            height: self.render.height,
            max_steps: self.render.max_steps,
            apples: self.task.apples,
            rewards: TaskRewards {
                pick: self.task.pick,
                goal: self.task.goal,
                step_penalty: self.task.step_penalty,
                pick_radius: self.task.pick_radius,
                goal_radius: self.task.goal_radius,
                goal_visible_fraction: self.task.goal_visible_fraction,
            },
        }
    }

    pub fn task_mode(&self) -> Result<TaskMode> {
        TaskMode::parse(&self.task.mode)
    }

    pub fn reward_source(&self) -> Result<RewardSource> {
        match self.trainer.reward_source.as_str() {
            "splat" => Ok(RewardSource::Splat),
            "icm" => Ok(RewardSource::Icm),
            "task" => Ok(RewardSource::Task),
            other => Err(CoreError::Config(format!("unknown reward source {other:?}"))),
        }
    }

    pub fn splat_config(&self) -> SplatConfig {
        let s = &self.splat;
        SplatConfig {
            insert_stride: s.insert_stride,
            opacity_init: s.opacity_init,
            scale_factor: s.scale_factor,
            max_scale: s.max_scale,
            memory_window: (s.memory_window > 0).then_some(s.memory_window),
            gate: s.gate,
            insert_error: s.insert_error,
            gate_blur_kernel: s.gate_blur_kernel,
            gate_blur_sigma: s.gate_blur_sigma,
            gate_downsample: s.gate_downsample,
            insert_transmittance: s.insert_transmittance,
            lr_color: s.lr_color,
            lr_opacity: s.lr_opacity,
            refine_views: s.refine_views,
            refine_every: s.refine_every,
            opacity_floor: s.opacity_floor,
            raster: RasterConfig {
                tile: s.tile,
                cutoff_sigma: s.cutoff_sigma,
                dilation: s.dilation,
                near: s.near,
                min_transmittance: s.min_transmittance,
                background: s.background,
            },
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        let r = &self.reward;
        RewardConfig {
            blur_kernel: r.blur_kernel,
            blur_sigma: r.blur_sigma,
            downsample: r.downsample,
            tau: r.tau,
            r_new: r.r_new,
            r_old: r.r_old,
        }
    }

    pub fn icm_config(&self) -> IcmConfig {
        let c = &self.icm;
        IcmConfig {
            latent: c.latent,
            hidden: c.hidden,
            input_side: c.input_side,
            reward_scale: c.reward_scale,
            reward_clip: c.reward_clip,
            lr: c.lr,
        }
    }

    pub fn policy_config(&self) -> Result<PolicyConfig> {
        let p = &self.policy;
        Ok(PolicyConfig {
            height: self.render.height,
            width: self.render.width,
            patch: p.patch,
            d_model: p.d_model,
            heads: p.heads,
            layers: p.layers,
            window: p.window,
            memory_after: p.memory_after.clone(),
            mlp_ratio: p.mlp_ratio,
            memory_eps: p.memory_eps,
            layer_norm_eps: p.layer_norm_eps,
            patch_positions: p.patch_positions,
            mode: ContextMode::parse(&p.mode)?,
        })
    }

    pub fn ppo_config(&self) -> PpoConfig {
        let t = &self.trainer;
        PpoConfig {
            clip: t.clip,
            value_coef: t.value_coef,
            epochs: t.epochs,
            minibatch: t.minibatch,
            max_grad_norm: t.max_grad_norm,
            normalize_advantages: t.normalize_advantages,
        }
    }

    pub fn schedules(&self) -> Schedules {
        let t = &self.trainer;
        Schedules {
            total_steps: self.total_steps,
            beta0: t.beta0,
            anneal_start: t.anneal_start,
            anneal_len: t.anneal_len,
            entropy0: t.entropy0,
            entropy_decay: t.entropy_decay,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            maze_width: self.scene.maze_width,
            maze_height: self.scene.maze_height,
            scene: self.scene_params(),
            env: self.env_config(),
            task: self.task_mode().unwrap_or(TaskMode::Explore),
            episodes_per_scene: e.episodes_per_scene,
            horizons: e.horizons.clone(),
            threshold: e.threshold,
            gt_points: e.gt_points,
            stride: e.stride,
            overlay_px: e.overlay_px,
        }
    }

    pub fn eval_scenes(&self) -> Result<Vec<u64>> {
        if !self.eval.scenes.is_empty() {
            return parse_seeds(&self.eval.scenes.iter().map(|s| format!("{s}\n")).collect::<String>());
        }
        if self.eval.scenes_file.is_empty() {
            parse_seeds(DEFAULT_EVAL_SEEDS)
        } else {
            crate::evalbench::load_seeds(Path::new(&self.eval.scenes_file))
        }
    }
}
