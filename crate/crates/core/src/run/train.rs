use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rbc_grad::{Adam, AdamConfig};

use crate::curiosity::{IcmModel, RewardSource};
use crate::error::{io_err, CoreError, Result};
use crate::evalbench::{run_eval_suite, write_outputs, CoverageReport, PolicyExplorer};
use crate::policy::Policy;
use crate::seeds::{self, TAG_INIT};
use crate::trainer::{collect_rollout, ppo_update, CollectOptions, PpoStats, Worker, WorkerConfig};
use crate::worldsim::TaskMode;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;

const POLICY: &str = "policy_params/";
const POLICY_ADAM: &str = "policy_adam/";
const ICM: &str = "icm_params/";
const ICM_ADAM: &str = "icm_adam/";

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub update: u64,
    pub step: u64,
    pub beta: f64,
    pub entropy_coef: f64,
    pub episodes: usize,
    pub mean_episode_curiosity: f64,
    pub mean_episode_task_reward: f64,
    pub mean_episode_picks: f64,
    pub stats: PpoStats,
    pub eval: Option<CoverageReport>,
}

/// Where a run starts from.
#[derive(Debug, Clone, Default)]
pub enum Start {
    #[default]
    Fresh,
    /// Continue a run from one of its checkpoints.
    Resume { path: PathBuf, allow_config_mismatch: bool },
    /// Fine-tune: take the policy weights of another run.
    Weights(PathBuf),
}

/// Training state between updates.
pub struct Trainer {
    cfg: RunConfig,
    hash: String,
    dir: PathBuf,
    policy: Policy,
    adam: Adam,
    icm: Option<IcmModel>,
    workers: Vec<Worker>,
    step: u64,
    update: u64,
    rows: Vec<MetricsRow>,
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub step: u64,
    pub update: u64,
    pub metrics: Vec<MetricsRow>,
    pub policy: Policy,
}

fn worker_config(cfg: &RunConfig) -> Result<WorkerConfig> {
    Ok(WorkerConfig {
        seed: cfg.seed,
        maze_width: cfg.scene.maze_width,
        maze_height: cfg.scene.maze_height,
        scene: cfg.scene_params(),
        env: cfg.env_config(),
        task: cfg.task_mode()?,
        source: cfg.reward_source()?,
        splat: cfg.splat_config(),
        reward: cfg.reward_config(),
        scene_pool: cfg.trainer.scene_pool.clone(),
    })
}

/// Name of the checkpoint written after `update` updates.
pub fn checkpoint_name(update: u64) -> String {
    format!("ckpt_{update:07}.rbc")
}

/// Newest checkpoint in a run directory.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let ckpts = dir.join("checkpoints");
    if !ckpts.exists() {
        return Ok(None);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(&ckpts)
        .map_err(io_err(&ckpts))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "rbc"))
        .collect();
    found.sort();
    Ok(found.pop())
}

/// Rebuild a policy for `cfg` from the weights stored in a checkpoint.
pub fn load_policy(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Policy> {
    let mut policy = Policy::new(cfg.policy_config()?, 0)?;
    ckpt.restore_params(POLICY, policy.params_mut())?;
    Ok(policy)
}

impl Trainer {
    pub fn new(cfg: RunConfig, start: Start) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let dir = cfg.resolved_run_dir();
        let adam_cfg = AdamConfig::with_lr(cfg.trainer.lr);
        let mut policy = Policy::new(cfg.policy_config()?, seeds::derive(&[TAG_INIT, cfg.seed]))?;
        let mut adam = Adam::new(adam_cfg, policy.params());
        let mut icm = (cfg.reward_source()? == RewardSource::Icm)
            .then(|| IcmModel::new(cfg.icm_config(), seeds::derive(&[TAG_INIT, cfg.seed, 1])));
        let (mut step, mut update) = (0, 0);
        match &start {
            Start::Fresh => {}
            Start::Resume {
                path,
                allow_config_mismatch,
            } => {
                let ck = Checkpoint::load(path)?;
                ck.check_config(&hash, *allow_config_mismatch)?;
                ck.restore_params(POLICY, policy.params_mut())?;
                adam = ck.restore_adam(POLICY_ADAM, adam_cfg, policy.params())?;
                if let Some(m) = icm.as_mut() {
                    let mut params = m.params().clone();
                    ck.restore_params(ICM, &mut params)?;
                    let a = ck.restore_adam(ICM_ADAM, AdamConfig::with_lr(cfg.icm.lr), &params)?;
                    *m = IcmModel::from_parts(*m.config(), params, a);
                }
                step = ck.step;
                update = ck.update;
            }
            Start::Weights(path) => {
                let ck = Checkpoint::load(path)?;
                ck.restore_params(POLICY, policy.params_mut())?;
            }
        }
        let wc = worker_config(&cfg)?;
        let workers = (0..cfg.trainer.workers)
            .map(|id| Worker::new(id, wc.clone(), &policy, update))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            hash,
            dir,
            policy,
            adam,
            icm,
            workers,
            step,
            update,
            rows: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn update(&self) -> u64 {
        self.update
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            config_hash: self.hash.clone(),
            step: self.step,
            update: self.update,
            ..Checkpoint::default()
        };
        ck.add_params(POLICY, self.policy.params());
        ck.add_adam(POLICY_ADAM, &self.adam, self.policy.params());
        if let Some(m) = &self.icm {
            ck.add_params(ICM, m.params());
            ck.add_adam(ICM_ADAM, m.adam(), m.params());
        }
        ck
    }

    /// Save a checkpoint and start fresh episodes, so that resuming from
    /// it continues exactly as this run does.
    pub fn save_checkpoint(&mut self) -> Result<PathBuf> {
        let path = self.dir.join("checkpoints").join(checkpoint_name(self.update));
        self.checkpoint().save(&path)?;
        for w in &mut self.workers {
            w.restart(&self.policy, self.update)?;
        }
        Ok(path)
    }

    /// Evaluate the current policy on the held-out scenes.
    pub fn evaluate(&self) -> Result<CoverageReport> {
        let mut explorer = PolicyExplorer::new(&self.policy, format!("update{:07}", self.update), 0.0);
        let out = run_eval_suite(&mut explorer, &self.cfg.eval_scenes()?, &self.cfg.eval_config(), &self.hash)?;
        write_outputs(&out, &self.dir.join("eval"))?;
        Ok(out.report)
    }

    /// Collect, estimate advantages and update once.
    pub fn train_step(&mut self) -> Result<MetricsRow> {
        let sched = self.cfg.schedules();
        let beta = sched.beta(self.step);
        let entropy_coef = sched.entropy_coef(self.update);
        let opts = CollectOptions {
            horizon: self.cfg.trainer.horizon,
            chunk: self.cfg.trainer.chunk,
            beta,
            update: self.update,
        };
        let mut batch = collect_rollout(&mut self.workers, &self.policy, self.icm.as_ref(), opts)?;
        self.step += batch.len() as u64;
        if let Some(m) = self.icm.as_mut() {
            if !batch.icm.is_empty() {
                m.update(&batch.icm)?;
            }
        }
        let ppo = self.cfg.ppo_config();
        batch.compute_advantages(self.cfg.trainer.gamma, self.cfg.trainer.lambda, ppo.normalize_advantages);
        std::fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let stats = ppo_update(
            &mut self.policy,
            &mut self.adam,
            &batch,
            &ppo,
            entropy_coef,
            self.cfg.seed,
            self.update,
            &self.dir,
        )?;
        self.update += 1;
        let n = batch.episodes.len();
        let mean = |f: fn(&crate::trainer::EpisodeSummary) -> f64| {
            if n == 0 {
                0.0
            } else {
                batch.episodes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let row = MetricsRow {
            update: self.update,
            step: self.step,
            beta,
            entropy_coef,
            episodes: n,
            mean_episode_curiosity: mean(|e| e.curiosity),
            mean_episode_task_reward: mean(|e| e.task_reward),
            mean_episode_picks: mean(|e| e.picks as f64),
            stats,
            eval: None,
        };
        Ok(row)
    }

    fn metrics_header(&self) -> String {
        let mut s = String::from(
            "update,step,beta,entropy_coef,episodes,mean_episode_curiosity,mean_episode_task_reward,mean_episode_picks,\
             policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm",
        );
        for h in &self.cfg.eval.horizons {
            let _ = write!(s, ",coverage@{h}");
        }
        s.push_str(",avg_dist\n");
        s
    }

    fn append_metrics(&self, row: &MetricsRow) -> Result<()> {
        let path = self.dir.join("metrics.csv");
        let fresh = !path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut line = if fresh { self.metrics_header() } else { String::new() };
        let st = &row.stats;
        let _ = write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.update,
            row.step,
            row.beta,
            row.entropy_coef,
            row.episodes,
            row.mean_episode_curiosity,
            row.mean_episode_task_reward,
            row.mean_episode_picks,
            st.policy_loss,
            st.value_loss,
            st.entropy,
            st.approx_kl,
            st.clip_fraction,
            st.grad_norm
        );
        match &row.eval {
            Some(r) => {
                for c in &r.completeness {
                    let _ = write!(line, ",{c}");
                }
                let _ = writeln!(line, ",{}", r.avg_dist);
            }
            None => {
                line.push_str(&",".repeat(self.cfg.eval.horizons.len() + 1));
                line.push('\n');
            }
        }
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }

    fn write_run_files(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let cfg_path = self.dir.join("config.toml");
        std::fs::write(&cfg_path, self.cfg.to_toml()).map_err(io_err(&cfg_path))?;
        let manifest = format!(
            "package = \"{}\"\nversion = \"{}\"\nconfig_hash = \"{}\"\nseed = {}\n\
             seed_hierarchy = \"run seed -> (stream tag, worker, update at restart, episode)\"\n\
             workers = {}\ndeterministic = {}\nos = \"{}\"\narch = \"{}\"\nprofile = \"{}\"\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            self.hash,
            self.cfg.seed,
            self.cfg.trainer.workers,
            self.cfg.trainer.workers == 1,
            std::env::consts::OS,
            std::env::consts::ARCH,
            if cfg!(debug_assertions) { "debug" } else { "release" },
        );
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, manifest).map_err(io_err(&path))
    }

    /// Train until `total_steps`, with periodic evaluation and checkpoints.
    pub fn run(mut self) -> Result<TrainOutcome> {
        self.write_run_files()?;
        let every = self.cfg.trainer.checkpoint_every;
        let eval_every = self.cfg.trainer.eval_every;
        let mut last = None;
        while self.step < self.cfg.total_steps {
            let mut row = self.train_step()?;
            if eval_every > 0 && self.update % eval_every == 0 {
                row.eval = Some(self.evaluate()?);
            }
            self.append_metrics(&row)?;
            self.rows.push(row);
            if every > 0 && self.update % every == 0 {
                last = Some((self.update, self.save_checkpoint()?));
            }
        }
        let final_checkpoint = match last {
            Some((u, p)) if u == self.update => p,
            _ => self.save_checkpoint()?,
        };
        Ok(TrainOutcome {
            dir: self.dir,
            final_checkpoint,
            step: self.step,
            update: self.update,
            metrics: self.rows,
            policy: self.policy,
        })
    }
}

/// Train from scratch or resume, per `start`.
pub fn run_training(cfg: RunConfig, start: Start) -> Result<TrainOutcome> {
    Trainer::new(cfg, start)?.run()
}

/// Fine-tune a pretrained policy on task reward.
///
/// The budget is `finetune_fraction` of the pretraining `total_steps`;
/// curiosity is switched off and schedules restart over the new budget.
pub fn run_finetune(checkpoint: &Path, task: TaskMode, cfg: &RunConfig) -> Result<TrainOutcome> {
    if task == TaskMode::Explore {
        return Err(CoreError::InvalidArgument("fine-tuning needs apples or image_goal".into()));
    }
    let mut ft = cfg.clone();
    ft.task.mode = task.name().into();
    ft.trainer.reward_source = "task".into();
    ft.total_steps = ((cfg.total_steps as f64 * cfg.trainer.finetune_fraction).round() as u64).max(1);
    ft.run_dir = cfg.resolved_run_dir().join(format!("finetune_{}", task.name())).display().to_string();
    run_training(ft, Start::Weights(checkpoint.to_path_buf()))
}
