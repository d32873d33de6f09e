//! Configuration, the training loop, cross-validation and sweeps, transfer
//! experiments and reports.

mod config;
mod cv;
mod report;
mod train;
mod transfer;

pub use config::{
    parse_config, parse_grid, ExperimentConfig, Grid, CONFIG_KEYS, DEFAULT_BASELINE_LR, DEFAULT_CNN_LR, DEFAULT_RNN_LR,
};
pub use cv::{cross_validate, fold_splits, iqr, median, quantile, rank, summarize, sweep};
pub use report::{
    confusion_path, emit_report, format_metric, parse_report_json, to_json, ConfusionMatrix, CvSummary, EpochRecord,
    InfusionInfo, Report, ReportDocument, ReportFormat, RunReport, CSV_COLUMNS, REPORT_FORMAT_VERSION,
};
pub use train::{evaluate, fit, train_run, Evaluation};
pub use transfer::{
    binary_ternary_comparison, infusion_run, infusion_splits, misclassification_report, Misclassification,
    SchemeComparison,
};
