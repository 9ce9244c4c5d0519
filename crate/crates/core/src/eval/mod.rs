//! Metrics, baselines, shuffled controls, protocols and reports.

pub mod baseline;
pub mod control;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod summary;

pub use baseline::{poprec, PopRec};
pub use control::shuffled_control;
pub use metrics::{evaluate, user_metrics, Metric, MetricReport, UserMetrics};
pub use protocol::{run_once, run_protocol, summarize, ModelSpec, ProtocolConfig, RunOutcome, Scenario, Target};
pub use report::{render_table, ReportRow};
pub use summary::{format_cell, margin95, mean, summarize_runs, t_quantile_975, RunSummary};
