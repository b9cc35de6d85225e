use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FilterKind};
use crate::experiment::{ExperimentRun, StepRecord};
use crate::seeds::{derive_seed, Stream};
use crate::{run_experiment, HarnessError};

/// Error statistics of one scalar series.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub rmse: f64,
    /// Unbiased sample variance; `0` for fewer than two samples.
    pub variance: f64,
}

impl ErrorStats {
    pub fn of(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self::default();
        }
        let n = errors.len() as f64;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        let mean = errors.iter().sum::<f64>() / n;
        let variance = if errors.len() < 2 {
            0.0
        } else {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        Self { rmse, variance }
    }
}

/// Per-filter row of a run summary or comparison table. Gap columns are
/// present only for the nGSF row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub filter: FilterKind,
    pub samples: usize,
    pub rmse: Vec<f64>,
    pub error_variance: Vec<f64>,
    /// Mean of `final − warm-start` exact objective over all updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_cost_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cost_gap: Option<f64>,
    /// Updates whose final objective exceeds the warm start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance_violations: Option<usize>,
}

/// Errors of `filter` over all steps with a measurement, one vector per state.
pub fn filter_errors(records: &[StepRecord], filter: FilterKind) -> Vec<Vec<f64>> {
    let dim = records.first().map_or(0, |r| r.truth.len());
    let mut out = vec![Vec::new(); dim];
    for record in records.iter().filter(|r| r.measurement.is_some()) {
        if let Some(fs) = record.filters.iter().find(|f| f.filter == filter) {
            for (j, e) in fs.error.iter().enumerate() {
                out[j].push(*e);
            }
        }
    }
    out
}

/// `(final − warm)` exact-objective gaps of every nGSF update.
pub fn cost_gaps(records: &[StepRecord]) -> Vec<f64> {
    records
        .iter()
        .flat_map(|r| r.filters.iter())
        .filter_map(|f| f.ngsf.as_ref())
        .map(|s| s.final_cost - s.warm_cost)
        .collect()
}

fn row(filter: FilterKind, errors: &[Vec<f64>], gaps: &[f64]) -> FilterRow {
    let stats: Vec<ErrorStats> = errors.iter().map(|e| ErrorStats::of(e)).collect();
    let is_ngsf = filter == FilterKind::Ngsf;
    FilterRow {
        filter,
        samples: errors.first().map_or(0, Vec::len),
        rmse: stats.iter().map(|s| s.rmse).collect(),
        error_variance: stats.iter().map(|s| s.variance).collect(),
        mean_cost_gap: is_ngsf.then(|| if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 }),
        max_cost_gap: is_ngsf.then(|| gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max)).map(|g| if g.is_finite() { g } else { 0.0 }),
        dominance_violations: is_ngsf.then(|| gaps.iter().filter(|&&g| g > 0.0).count()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub master_seed: u64,
    pub horizon_steps: usize,
    pub rows: Vec<FilterRow>,
}

pub fn summarize_run(run: &ExperimentRun) -> RunSummary {
    let gaps = cost_gaps(&run.records);
    RunSummary {
        master_seed: run.config.master_seed,
        horizon_steps: run.config.horizon_steps,
        rows: run
            .config
            .filters
            .iter()
            .map(|&f| row(f, &filter_errors(&run.records, f), &gaps))
            .collect(),
    }
}

/// Paired comparison of per-run error variances for one state,
/// `nGSF − GSF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedState {
    pub state: usize,
    pub ngsf_lower: usize,
    pub gsf_lower: usize,
    pub ties: usize,
    pub mean_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRun {
    pub run: usize,
    pub seed: u64,
    pub filter: FilterKind,
    pub rmse: Vec<f64>,
    pub error_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub runs: usize,
    pub horizon_steps: usize,
    pub master_seed: u64,
    pub rows: Vec<FilterRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_error_variance: Option<Vec<PairedState>>,
    pub per_run: Vec<PerRun>,
}

/// Seed of run `index` in a Monte Carlo batch.
pub fn run_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Stream::Run, index as u64, 0)
}

/// Paired Monte Carlo over `n_runs` derived seeds. Each run uses one seed for
/// every filter, so the filters share clouds and measurements.
pub fn monte_carlo_compare(config: &ExperimentConfig, n_runs: usize) -> Result<ComparisonTable, HarnessError> {
    if n_runs < 2 {
        return Err(HarnessError::Config("compare needs at least 2 runs".into()));
    }
    config.validate()?;
    let dim = config.true_x0.len();
    let mut pooled: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); dim]; config.filters.len()];
    let mut gaps = Vec::new();
    let mut per_run = Vec::new();
    for index in 0..n_runs {
        let seed = run_seed(config.master_seed, index);
        let run_config = ExperimentConfig {
            master_seed: seed,
            cloud_snapshots: Vec::new(),
            ..config.clone()
        };
        let run = run_experiment(&run_config).map_err(|failure| HarnessError::Run {
            run: index,
            source: Box::new(failure.error),
        })?;
        gaps.extend(cost_gaps(&run.records));
        for (slot, &filter) in config.filters.iter().enumerate() {
            let errors = filter_errors(&run.records, filter);
            let stats: Vec<ErrorStats> = errors.iter().map(|e| ErrorStats::of(e)).collect();
            per_run.push(PerRun {
                run: index,
                seed,
                filter,
                rmse: stats.iter().map(|s| s.rmse).collect(),
                error_variance: stats.iter().map(|s| s.variance).collect(),
            });
            for (j, e) in errors.into_iter().enumerate() {
                pooled[slot][j].extend(e);
            }
        }
    }
    let rows = config
        .filters
        .iter()
        .zip(&pooled)
        .map(|(&f, errors)| row(f, errors, &gaps))
        .collect();
    let has_pair = config.filters.contains(&FilterKind::Gsf) && config.filters.contains(&FilterKind::Ngsf);
    let paired = has_pair.then(|| paired_states(&per_run, dim));
    Ok(ComparisonTable {
        runs: n_runs,
        horizon_steps: config.horizon_steps,
        master_seed: config.master_seed,
        rows,
        paired_error_variance: paired,
        per_run,
    })
}

fn paired_states(per_run: &[PerRun], dim: usize) -> Vec<PairedState> {
    let pick = |filter| per_run.iter().filter(move |p: &&PerRun| p.filter == filter);
    (0..dim)
        .map(|j| {
            let diffs: Vec<f64> = pick(FilterKind::Ngsf)
                .zip(pick(FilterKind::Gsf))
                .map(|(n, g)| n.error_variance[j] - g.error_variance[j])
                .collect();
            PairedState {
                state: j,
                ngsf_lower: diffs.iter().filter(|&&d| d < 0.0).count(),
                gsf_lower: diffs.iter().filter(|&&d| d > 0.0).count(),
                ties: diffs.iter().filter(|&&d| d == 0.0).count(),
                mean_difference: diffs.iter().sum::<f64>() / diffs.len().max(1) as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_stats_closed_forms() {
        let s = ErrorStats::of(&[1.0, -1.0, 3.0]);
        assert!((s.rmse - (11.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.variance - 4.0).abs() < 1e-15);
        assert_eq!(ErrorStats::of(&[2.0]).variance, 0.0);
        assert_eq!(ErrorStats::of(&[]), ErrorStats::default());
    }
}
