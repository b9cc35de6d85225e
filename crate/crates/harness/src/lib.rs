//! Duffing-oscillator benchmark for the Gaussian sum filters: propagate a
//! particle cloud, fit a mixture, update with GSF / nGSF / a moment-matched
//! Kalman baseline, resample, repeat.

use std::path::{Path, PathBuf};

use thiserror::Error;
use wfilter_core::FilterError;

pub mod config;
pub mod experiment;
pub mod output;
pub mod seeds;
pub mod summary;
pub mod validate;

pub use config::{parse_filters, ExperimentConfig, FilterKind, MeasurementConfig, NgsfConfig};
pub use experiment::{run_experiment, ExperimentRun, FilterStep, NgsfSummary, RunFailure, StepRecord};
pub use output::{emit_comparison, emit_outputs};
pub use summary::{monte_carlo_compare, summarize_run, ComparisonTable, FilterRow, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("step {step} ({}): {module} failed: {source}", .filter.map_or("all filters", |f| f.name()))]
    Step {
        step: usize,
        filter: Option<FilterKind>,
        module: &'static str,
        source: FilterError,
    },
    #[error("run {run}: {source}")]
    Run { run: usize, source: Box<HarnessError> },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Configuration and input-validation failures, as opposed to runtime
    /// failures inside a run.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Config(_) => true,
            HarnessError::Filter(e) => matches!(e, FilterError::Validation(_) | FilterError::DimensionMismatch { .. }),
            _ => false,
        }
    }
}
