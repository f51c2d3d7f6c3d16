//! Synthetic scenes, pair sampling, run configuration and reporting.

mod config;
mod eval;
mod pairs;
mod report;
mod scene;

pub use config::{CoplanarConfig, InputPaths, MaskConfig, PairConfig, RunConfig, SEED_ENV};
pub use eval::{
    estimate_pose, eval_homography_records, eval_pose_pairs, HomographyEvalReport, Metrics,
    PoseEvalReport, PoseOutcome,
};
pub use pairs::{pair_overlaps, sample_pairs, sample_weighted_pairs, PairOverlap};
pub use report::{
    evaluate_pair, load_confidence, load_depth, load_field, load_image, load_json, load_normals,
    pair_seed, run_report, CoplanarSummary, LossSummary, MaskSummary, MatchSummary, PairInputs,
    PairReport, PckSummary, Report, Summary,
};
pub use scene::{synth_scene, PlaneSpec, SceneSpec, SynthView};
