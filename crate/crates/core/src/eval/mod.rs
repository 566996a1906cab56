//! Confusion matrices and macro metrics, horizon tables, test-time voting,
//! K-fold and augmentation ablation runs, and report emission.

mod horizon;
mod kfold;
mod metrics;
mod otc;
pub mod plot;
mod report;

pub use horizon::{horizon_eval, predict_all, MetricsRow, OtcSettings};
pub use kfold::{
    ablation_run, kfold_run, AblationReport, AblationSeries, KFoldReport, KFoldRow, METHOD_OTC,
    METHOD_PLAIN,
};
pub use metrics::{
    class_metrics, confusion, mean_std, metrics_from_confusion, pct, ClassMetrics, ConfusionMatrix,
    Metrics,
};
pub use otc::{otc_predict, otc_vote};
pub use report::{
    config_hash, emit_report, Report, ReportFormat, ABLATION_CSV, KFOLD_CSV, REPORT_CSV,
    REPORT_JSON, SCHEMA_VERSION,
};
