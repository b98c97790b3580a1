//! Exploration metrics: scene completeness against ground-truth surface
//! points, the evaluation suite, reference explorers and the ablation
//! matrix.

mod ablation;
mod baselines;
mod metrics;
mod suite;

pub use ablation::{parse_variants, run_ablation, variant_config, VARIANTS};
pub use baselines::{Explorer, PolicyExplorer, RandomExplorer, WallFollower};
pub use metrics::{
    brute_force_nearest, completeness, coverage_brute_force, coverage_from_points, DepthView, EpisodeCoverage,
    SpatialHash, DEFAULT_HORIZONS, DEFAULT_THRESHOLD,
};
pub use suite::{
    format_table, load_seeds, parse_seeds, run_eval_suite, write_outputs, CoverageReport, EpisodeRecord, EvalConfig,
    EvalOutput, Overlay, DEFAULT_EVAL_SEEDS,
};
