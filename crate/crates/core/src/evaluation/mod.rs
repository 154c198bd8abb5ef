//! Agreement metrics, panel consensus, significance testing and the
//! leave-one-rater-out study.

pub mod metrics;
pub mod permutation;
pub mod study;
pub mod studyfile;

pub use metrics::{accuracy, dice, iou, mae_me, panel_ground_truth, panel_share_truth, PanelConfig};
pub use permutation::{exact_sign_flip_test, monte_carlo_sign_flip_test, paired_permutation_test};
pub use study::{
    fit_panel_bias_thresholds, leave_one_out_study, ComparisonRow, FoldSplit, Metric, StudyCase,
    StudyOptions,
};
