//! `rbc`: train, fine-tune, evaluate and inspect exploration agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use rbc_core::error::io_err;
use rbc_core::evalbench::{
    format_table, load_seeds, parse_variants, run_ablation, run_eval_suite, write_outputs,
    EvalOutput, Explorer, PolicyExplorer, RandomExplorer, WallFollower,
};
use rbc_core::run::{load_policy, run_finetune, run_training, Checkpoint, RunConfig, Start};
use rbc_core::worldsim::TaskMode;
use rbc_core::{CoreError, Result};

#[derive(Parser)]
#[command(
    name = "rbc",
    version,
    about = "Curiosity-driven exploration with a persistent splat world model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a policy on curiosity reward.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint of the same run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Resume even if the checkpoint was written under another config.
        #[arg(long, requires = "resume")]
        allow_config_mismatch: bool,
        /// `section.key=value` overrides, applied last.
        overrides: Vec<String>,
    },
    /// Fine-tune a pretrained checkpoint on a downstream task.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        config: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint or a baseline on held-out scenes.
    Eval {
        #[arg(
            long,
            required_unless_present = "baseline",
            conflicts_with = "baseline"
        )]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Seed list, one per line; defaults to the built-in held-out set.
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to `<run_dir>/eval_<label>`.
        #[arg(long)]
        out: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Train and evaluate ablation variants under one budget.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated variant names.
        #[arg(long, default_value = "full,short_memory_64,ctx1,random_policy")]
        variants: String,
        #[arg(long)]
        out: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Roll out a checkpoint on one scene and write a top-down overlay.
    RenderTraj {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene_seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Print the header and tensor table of a checkpoint.
    InspectCkpt { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Apples,
    ImageGoal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
    WallFollower,
}

/// Failure classes with distinct exit codes.
enum Failure {
    Usage(String),
    Run(CoreError),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Run(e)
    }
}

/// Load `--config`, or the `config.toml` of the run owning `ckpt`.
fn resolve_config(
    config: Option<&Path>,
    ckpt: Option<&Path>,
    overrides: &[String],
) -> std::result::Result<RunConfig, Failure> {
    let (path, run_dir) = match (config, ckpt) {
        (Some(p), _) => (p.to_path_buf(), None),
        (None, Some(c)) => {
            let dir = c.parent().and_then(Path::parent).map(Path::to_path_buf);
            match dir
                .as_ref()
                .map(|d| d.join("config.toml"))
                .filter(|p| p.is_file())
            {
                Some(p) => (p, dir),
                None => {
                    return Err(Failure::Usage(format!(
                        "no --config given and no config.toml beside {}",
                        c.display()
                    )))
                }
            }
        }
        (None, None) => return Err(Failure::Usage("missing --config".into())),
    };
    if !path.is_file() {
        return Err(Failure::Usage(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let mut cfg = RunConfig::load(&path)?.with_overrides(overrides)?;
    if cfg.run_dir.is_empty() {
        if let Some(d) = run_dir {
            cfg.run_dir = d.display().to_string();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &EvalOutput, dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_outputs(out, dir)?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    print!("{}", format_table(std::slice::from_ref(&out.report)));
    println!("wrote {}", dir.display());
    Ok(())
}

fn execute(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Train {
            config,
            resume,
            allow_config_mismatch,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), resume.as_deref(), &overrides)?;
            let start = match resume {
                Some(path) => Start::Resume {
                    path,
                    allow_config_mismatch,
                },
                None => Start::Fresh,
            };
            let out = run_training(cfg, start)?;
            println!(
                "trained to step {} (update {}); final checkpoint {}",
                out.step,
                out.update,
                out.final_checkpoint.display()
            );
        }
        Command::Finetune {
            ckpt,
            task,
            config,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), Some(&ckpt), &overrides)?;
            let task = match task {
                Task::Apples => TaskMode::Apples,
                Task::ImageGoal => TaskMode::ImageGoal,
            };
            let out = run_finetune(&ckpt, task, &cfg)?;
            println!(
                "fine-tuned for {} steps; final checkpoint {}",
                out.step,
                out.final_checkpoint.display()
            );
        }
        Command::Eval {
            ckpt,
            baseline,
            scenes,
            config,
            out,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), ckpt.as_deref(), &overrides)?;
            let scenes = match scenes {
                Some(p) => load_seeds(&p)?,
                None => cfg.eval_scenes()?,
            };
            let eval_cfg = cfg.eval_config();
            let hash = cfg.hash();
            let result = match (ckpt, baseline) {
                (Some(path), _) => {
                    let ck = Checkpoint::load(&path)?;
                    let policy = load_policy(&cfg, &ck)?;
                    let mut explorer = PolicyExplorer::new(&policy, "policy", 0.0);
                    run_eval_suite(&mut explorer, &scenes, &eval_cfg, &hash)?
                }
                (None, Some(b)) => {
                    let mut explorer: Box<dyn Explorer> = match b {
                        Baseline::Random => Box::new(RandomExplorer::default()),
                        Baseline::WallFollower => Box::new(WallFollower::default()),
                    };
                    run_eval_suite(explorer.as_mut(), &scenes, &eval_cfg, &hash)?
                }
                (None, None) => {
                    return Err(Failure::Usage("eval needs --ckpt or --baseline".into()))
                }
            };
            let dir = out.unwrap_or_else(|| {
                cfg.resolved_run_dir()
                    .join(format!("eval_{}", result.report.label))
            });
            report(&result, &dir, &cfg)?;
        }
        Command::Ablate {
            config,
            variants,
            out,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), None, &overrides)?;
            let variants = parse_variants(&variants)?;
            let dir = out.unwrap_or_else(|| cfg.resolved_run_dir().join("ablation"));
            let reports = run_ablation(&cfg, &variants, &dir)?;
            print!("{}", format_table(&reports));
            println!("wrote {}", dir.display());
        }
        Command::RenderTraj {
            ckpt,
            scene_seed,
            config,
            steps,
            out,
            overrides,
        } => {
            let cfg = resolve_config(config.as_deref(), Some(&ckpt), &overrides)?;
            let mut eval_cfg = cfg.eval_config();
            eval_cfg.episodes_per_scene = 1;
            eval_cfg.horizons = vec![steps];
            eval_cfg.overlay_px = eval_cfg.overlay_px.max(1);
            let ck = Checkpoint::load(&ckpt)?;
            let policy = load_policy(&cfg, &ck)?;
            let mut explorer = PolicyExplorer::new(&policy, "policy", 0.0);
            let result = run_eval_suite(&mut explorer, &[scene_seed], &eval_cfg, &cfg.hash())?;
            let dir = out.unwrap_or_else(|| cfg.resolved_run_dir().join("trajectories"));
            report(&result, &dir, &cfg)?;
        }
        Command::InspectCkpt { path } => {
            let ck = Checkpoint::load(&path)?;
            let params: usize = ck.tensors.iter().map(|t| t.data.len()).sum();
            println!("format      RBC1 v{}", rbc_core::run::VERSION);
            println!("config_hash {}", ck.config_hash);
            println!("step        {}", ck.step);
            println!("update      {}", ck.update);
            for (k, v) in &ck.meta {
                println!("meta        {k} = {v}");
            }
            println!("tensors     {} ({params} floats)", ck.tensors.len());
            for t in &ck.tensors {
                println!("  {:<48} {:?}", t.name, t.shape);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
