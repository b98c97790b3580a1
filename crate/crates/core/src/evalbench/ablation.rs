use std::path::Path;

use crate::error::{io_err, CoreError, Result};
use crate::run::{run_training, RunConfig, Start};

use super::baselines::{PolicyExplorer, RandomExplorer};
use super::suite::{format_table, run_eval_suite, write_outputs, CoverageReport};

pub const VARIANTS: [&str; 10] = [
    "full",
    "short_memory_64",
    "icm_reward",
    "ctx1",
    "ctx4",
    "ctx16",
    "actor_ctx1",
    "critic_ctx1",
    "rnn_like",
    "random_policy",
];

/// The configuration a variant trains under, derived from `base`.
pub fn variant_config(base: &RunConfig, variant: &str) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match variant {
        "full" | "random_policy" => {}
        "short_memory_64" => cfg.splat.memory_window = 64,
        "icm_reward" => cfg.trainer.reward_source = "icm".into(),
        "ctx1" | "ctx4" | "ctx16" | "actor_ctx1" | "critic_ctx1" | "rnn_like" => cfg.policy.mode = variant.into(),
        other => return Err(CoreError::UnknownVariant(other.to_string())),
    }
    Ok(cfg)
}

pub fn parse_variants(list: &str) -> Result<Vec<String>> {
    let vs: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if vs.is_empty() {
        return Err(CoreError::InvalidArgument("no variants given".into()));
    }
    for v in &vs {
        if !VARIANTS.contains(&v.as_str()) {
            return Err(CoreError::UnknownVariant(v.clone()));
        }
    }
    Ok(vs)
}

/// Train every variant under the same budget and seed, evaluate each on
/// the held-out scenes and write a comparison table into `out_dir`.
///
/// `random_policy` is never trained; it samples uniformly throughout.
pub fn run_ablation(base: &RunConfig, variants: &[String], out_dir: &Path) -> Result<Vec<CoverageReport>> {
    for v in variants {
        variant_config(base, v)?;
    }
    let scenes = base.eval_scenes()?;
    let mut reports = Vec::new();
    for v in variants {
        let mut cfg = variant_config(base, v)?;
        let dir = out_dir.join(v);
        cfg.run_dir = dir.display().to_string();
        let eval_cfg = cfg.eval_config();
        let out = if v == "random_policy" {
            run_eval_suite(&mut RandomExplorer::default(), &scenes, &eval_cfg, &cfg.hash())?
        } else {
            let hash = cfg.hash();
            let trained = run_training(cfg, Start::Fresh)?;
            let mut explorer = PolicyExplorer::new(&trained.policy, v.clone(), 0.0);
            run_eval_suite(&mut explorer, &scenes, &eval_cfg, &hash)?
        };
        write_outputs(&out, &dir.join("eval"))?;
        reports.push(out.report);
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut csv = String::new();
    for (i, r) in reports.iter().enumerate() {
        let body = r.to_csv();
        let skip = if i == 0 { 0 } else { 1 };
        for line in body.lines().skip(skip) {
            csv.push_str(line);
            csv.push('\n');
        }
    }
    let path = out_dir.join("ablation.csv");
    std::fs::write(&path, csv).map_err(io_err(&path))?;
    let path = out_dir.join("ablation.txt");
    std::fs::write(&path, format_table(&reports)).map_err(io_err(&path))?;
    Ok(reports)
}
