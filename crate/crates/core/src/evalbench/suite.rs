use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::camera::Pose;
use crate::error::{io_err, CoreError, Result};
use crate::image::Image;
use crate::seeds::{self, TAG_EVAL};
use crate::worldsim::{Env, EnvConfig, Event, Scene, SceneParams, TaskMode, TopDown};

use super::baselines::Explorer;
use super::metrics::{completeness, DepthView, DEFAULT_HORIZONS, DEFAULT_THRESHOLD};

/// Seed list shipped with the crate.
pub const DEFAULT_EVAL_SEEDS: &str = include_str!("../../data/eval_seeds.txt");

/// Parse a seed list: one integer per line, `#` starts a comment.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let seed: u64 = line
            .parse()
            .map_err(|_| CoreError::Config(format!("seed list line {}: {line:?} is not an integer", n + 1)))?;
        if seeds::is_training_scene(seed) {
            return Err(CoreError::Config(format!(
                "seed list line {}: {seed} lies in the training seed range",
                n + 1
            )));
        }
        out.push(seed);
    }
    if out.is_empty() {
        return Err(CoreError::Config("seed list is empty".into()));
    }
    Ok(out)
}

pub fn load_seeds(path: &Path) -> Result<Vec<u64>> {
    parse_seeds(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub maze_width: usize,
    pub maze_height: usize,
    pub scene: SceneParams,
    pub env: EnvConfig,
    pub task: TaskMode,
    pub episodes_per_scene: usize,
    pub horizons: Vec<usize>,
    pub threshold: f64,
    pub gt_points: usize,
    /// Pixel stride of the back-projection (1 uses every pixel).
    pub stride: usize,
    /// Overlay resolution; 0 skips overlays.
    pub overlay_px: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            maze_width: 16,
            maze_height: 16,
            scene: SceneParams::default(),
            env: EnvConfig::default(),
            task: TaskMode::Explore,
            episodes_per_scene: 2,
            horizons: DEFAULT_HORIZONS.to_vec(),
            threshold: DEFAULT_THRESHOLD,
            gt_points: 20_000,
            stride: 1,
            overlay_px: 8,
        }
    }
}

impl EvalConfig {
    pub fn max_horizon(&self) -> usize {
        self.horizons.last().copied().unwrap_or(0)
    }
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub scene_seed: u64,
    pub episode_seed: u64,
    pub steps: usize,
    pub completeness: Vec<f64>,
    pub avg_dist: f64,
    pub picks: usize,
    pub task_reward: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub label: String,
    pub horizons: Vec<usize>,
    /// Mean over episodes, per horizon, in percent.
    pub completeness: Vec<f64>,
    pub avg_dist: f64,
    pub mean_picks: f64,
    pub success_rate: f64,
    pub episodes: Vec<EpisodeRecord>,
    pub config_hash: String,
}

impl CoverageReport {
    fn aggregate(label: &str, horizons: &[usize], episodes: Vec<EpisodeRecord>, config_hash: &str) -> Self {
        let n = episodes.len().max(1) as f64;
        let completeness = (0..horizons.len())
            .map(|h| episodes.iter().map(|e| e.completeness[h]).sum::<f64>() / n)
            .collect();
        Self {
            label: label.to_string(),
            horizons: horizons.to_vec(),
            completeness,
            avg_dist: episodes.iter().map(|e| e.avg_dist).sum::<f64>() / n,
            mean_picks: episodes.iter().map(|e| e.picks as f64).sum::<f64>() / n,
            success_rate: episodes.iter().filter(|e| e.success).count() as f64 / n,
            episodes,
            config_hash: config_hash.to_string(),
        }
    }

    /// Completeness at `horizon`, if it was evaluated.
    pub fn at(&self, horizon: usize) -> Option<f64> {
        self.horizons.iter().position(|&h| h == horizon).map(|i| self.completeness[i])
    }

    /// Per-episode rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,scene_seed,episode_seed,steps");
        for h in &self.horizons {
            let _ = write!(s, ",completeness@{h}");
        }
        s.push_str(",avg_dist,picks,task_reward,success,config_hash\n");
        for e in &self.episodes {
            let _ = write!(s, "{},{},{},{}", self.label, e.scene_seed, e.episode_seed, e.steps);
            for c in &e.completeness {
                let _ = write!(s, ",{c:.4}");
            }
            let _ = writeln!(
                s,
                ",{:.6},{},{:.6},{},{}",
                e.avg_dist, e.picks, e.task_reward, e.success, self.config_hash
            );
        }
        let _ = write!(s, "{},mean,mean,", self.label);
        for c in &self.completeness {
            let _ = write!(s, ",{c:.4}");
        }
        let _ = writeln!(
            s,
            ",{:.6},{:.4},,{:.4},{}",
            self.avg_dist, self.mean_picks, self.success_rate, self.config_hash
        );
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

/// Fixed-width comparison table of several reports.
pub fn format_table(reports: &[CoverageReport]) -> String {
    let mut s = format!("{:<16}", "variant");
    if let Some(r) = reports.first() {
        for h in &r.horizons {
            let _ = write!(s, " {:>10}", format!("compl@{h}"));
        }
    }
    let _ = writeln!(s, " {:>9} {:>7}", "avg_dist", "picks");
    for r in reports {
        let _ = write!(s, "{:<16}", r.label);
        for c in &r.completeness {
            let _ = write!(s, " {c:>10.2}");
        }
        let _ = writeln!(s, " {:>9.3} {:>7.2}", r.avg_dist, r.mean_picks);
    }
    s
}

/// Top-down trajectory image of one episode.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub name: String,
    pub image: Image,
}

pub struct EvalOutput {
    pub report: CoverageReport,
    pub overlays: Vec<Overlay>,
}

/// Evaluate an explorer on every scene, `episodes_per_scene` starts each.
///
/// Everything is seeded from the scene seed and the start index, so the
/// same explorer state gives the same report.
pub fn run_eval_suite(
    explorer: &mut dyn Explorer,
    scenes: &[u64],
    cfg: &EvalConfig,
    config_hash: &str,
) -> Result<EvalOutput> {
    if cfg.horizons.is_empty() {
        return Err(CoreError::InvalidArgument("no evaluation horizons".into()));
    }
    let horizon = cfg.max_horizon();
    let env_cfg = EnvConfig {
        max_steps: cfg.env.max_steps.max(horizon),
        ..cfg.env
    };
    let mut episodes = Vec::new();
    let mut overlays = Vec::new();
    for &scene_seed in scenes {
        let scene = Arc::new(Scene::generate(scene_seed, cfg.maze_width, cfg.maze_height, &cfg.scene)?);
        let gt = scene.sample_surface_points(cfg.gt_points, seeds::derive(&[TAG_EVAL, scene_seed]));
        for k in 0..cfg.episodes_per_scene as u64 {
            let episode_seed = seeds::derive(&[TAG_EVAL, scene_seed, k]);
            let mut env = Env::new(scene.clone(), env_cfg);
            let mut frame = env.reset(episode_seed, cfg.task)?;
            let goal = env.task().goal.as_ref().map(|g| g.frame.rgb.clone());
            explorer.begin(&scene, &frame, goal.as_ref(), seeds::derive(&[TAG_EVAL, scene_seed, k, 1]))?;
            let mut views = vec![DepthView::from(&frame)];
            let mut poses: Vec<Pose> = vec![frame.pose];
            let (mut picks, mut task_reward, mut success) = (0, 0.0, false);
            for _ in 0..horizon {
                let action = explorer.act(&frame)?;
                let res = env.step(action)?;
                picks += res.events.iter().filter(|e| matches!(e, Event::ApplePicked(_))).count();
                task_reward += res.reward_ext;
                success |= res.terminated;
                frame = res.frame;
                views.push(DepthView::from(&frame));
                poses.push(frame.pose);
                if res.terminated || res.truncated {
                    break;
                }
            }
            let cov = completeness(
                &gt,
                &views,
                env.intrinsics(),
                cfg.threshold,
                &cfg.horizons,
                cfg.stride,
                scene.diagonal(),
            )?;
            if cfg.overlay_px > 0 {
                let mut top = TopDown::new(&scene, cfg.overlay_px);
                top.points(&gt, &cov.seen);
                top.path(&poses);
                overlays.push(Overlay {
                    name: format!("{}_scene{scene_seed}_ep{k}", explorer.name()),
                    image: top.image,
                });
            }
            episodes.push(EpisodeRecord {
                scene_seed,
                episode_seed,
                steps: views.len() - 1,
                completeness: cov.completeness,
                avg_dist: cov.avg_dist,
                picks,
                task_reward,
                success,
            });
        }
    }
    let label = explorer.name().to_string();
    Ok(EvalOutput {
        report: CoverageReport::aggregate(&label, &cfg.horizons, episodes, config_hash),
        overlays,
    })
}

/// Write the report CSV and every overlay PPM into `dir`.
pub fn write_outputs(out: &EvalOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    out.report.write_csv(&dir.join(format!("coverage_{}.csv", out.report.label)))?;
    for o in &out.overlays {
        o.image.save_pnm(dir.join(format!("{}.ppm", o.name)))?;
    }
    Ok(())
}
