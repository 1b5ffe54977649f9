//! ROC analysis, per-video AUC aggregation and the evaluation pipelines.

mod metrics;
mod pipeline;
mod report;

pub use metrics::{auc, roc, RocCurve};
pub use pipeline::{
    alpha_sweep_reports, cross_context_report, error_profile, evaluate_cross_context, evaluate_within_context,
    within_context_report, ErrorProfile, TestVideo, VideoErrors,
};
pub use report::{AggregateReport, ReportSummary, RocResult, ScoreKind, VideoAuc, VideoScores};
