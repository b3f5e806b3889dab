//! Experiment harness: runs policies over a grid of seeds, reward weights
//! and disturbance levels, aggregates the results and writes CSV reports.

use std::path::{Path, PathBuf};

pub mod report;
pub mod run;
pub mod spec;
pub mod stats;

pub use report::{emit_report, read_runs_csv, read_summary_csv, write_summary_csv};
pub use run::{run_cell, run_experiment, CellOutcome, CellRun, RunSummary, Workload};
pub use spec::{Cell, ExperimentSpec, PolicyId, TraceSource};
pub use stats::{spearman, summarize, MetricStats, StatsRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Core(#[from] hems_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
