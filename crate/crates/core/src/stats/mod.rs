//! Replicates, sweeps, CLT checks and CSV output.

pub mod clt;
pub mod replicates;
pub mod report_csv;
pub mod summary;
pub mod sweep;

pub use clt::{clt_check, ks_critical, ks_statistic, ks_two_sample, CltCheck};
pub use replicates::{
    failure_rate, replicate_seed, run_replicates, run_single, ReplicateMetrics, ReplicateReport, RunSpec,
    MAX_FAILURE_RATE,
};
pub use report_csv::{fmt_float, write_reports, write_sweep_summary, REPORT_HEADER, SUMMARY_HEADER};
pub use summary::{linear_fit, loglog_slope, Moments, SlopeFit};
pub use sweep::{time_uniformity_sweep, variance_level_sweep, SweepGrid, SweepPoint, SweepResult, SweepSpec};
