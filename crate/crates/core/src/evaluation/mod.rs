//! Detection metrics and digital attack experiments.

mod experiments;
mod metrics;

pub use experiments::{
    attack_testset, build_ground_truth, evaluate_clean, evaluate_texture, recall_csv, recall_thresholds, score_images,
    shift_csv, shift_study, summary_csv, write_json, CropPolicy, EvalResult, ShiftReport, TestSet,
};
pub use metrics::{
    compute_ap, greedy_match, is_detected, masr, recall_confidence_curve, AsrReport, RankedHit, IOU_MATCH,
    MASR_THRESHOLDS,
};
