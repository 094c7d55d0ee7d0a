//! Objective metrics and the evaluation matrix.

pub mod harness;
pub mod metrics;

pub use harness::{evaluate_pipeline, run_matrix, MetricReport, MetricRow, Variant};
pub use metrics::{bootstrap_ci, lsd, lsd_mel, lsd_samples, mcd, si_sdr};
