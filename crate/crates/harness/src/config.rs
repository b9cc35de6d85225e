use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use wfilter_core::{DuffingModel, EmFitConfig, LinearMeasurementModel, NgsfOptions, StepPolicy};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Gsf,
    Ngsf,
    /// Single-Gaussian Kalman update of the moment-matched prior mixture.
    KfMomentmatch,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Gsf, FilterKind::Ngsf, FilterKind::KfMomentmatch];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Gsf => "gsf",
            FilterKind::Ngsf => "ngsf",
            FilterKind::KfMomentmatch => "kf_momentmatch",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown filter `{s}`")))
    }
}

/// Parses a comma-separated filter list such as `gsf,ngsf`.
pub fn parse_filters(list: &str) -> Result<Vec<FilterKind>, HarnessError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// `y = C x + v`, `v ~ N(0, R)`; matrices as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub c: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            c: vec![vec![1.0, 0.0]],
            r: vec![vec![0.1]],
        }
    }
}

impl MeasurementConfig {
    pub fn model(&self) -> Result<LinearMeasurementModel<f64>, HarnessError> {
        let c = rows(&self.c, "measurement.c")?;
        let r = rows(&self.r, "measurement.r")?;
        Ok(LinearMeasurementModel::new(c, r)?)
    }
}

fn rows(data: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, HarnessError> {
    let ncols = data.first().map_or(0, Vec::len);
    if data.is_empty() || ncols == 0 || data.iter().any(|r| r.len() != ncols) {
        return Err(HarnessError::Config(format!("{what} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(data.len(), ncols, |i, j| data[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgsfConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub step: StepPolicy,
}

impl Default for NgsfConfig {
    fn default() -> Self {
        let opts = NgsfOptions::<f64>::default();
        Self {
            max_iters: opts.max_iters,
            tol: opts.tol,
            step: opts.step,
        }
    }
}

impl NgsfConfig {
    pub fn options(&self) -> NgsfOptions<f64> {
        NgsfOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            step: self.step,
            ..NgsfOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub duffing: DuffingModel,
    pub em: EmFitConfig,
    pub measurement: MeasurementConfig,
    pub ensemble_size: usize,
    /// Measurement updates after the initial state; `0` records only step 0.
    pub horizon_steps: usize,
    /// Start of the true trajectory and center of the initial belief.
    pub true_x0: [f64; 2],
    /// Covariance of the initial belief around `true_x0`, row-major.
    pub initial_cov: Vec<Vec<f64>>,
    pub master_seed: u64,
    pub filters: Vec<FilterKind>,
    pub ngsf: NgsfConfig,
    /// Steps whose propagated prior clouds are written to `clouds/`.
    pub cloud_snapshots: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            duffing: DuffingModel::default(),
            em: EmFitConfig::default(),
            measurement: MeasurementConfig::default(),
            ensemble_size: 5000,
            horizon_steps: 10,
            true_x0: [1.0, 1.0],
            initial_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            master_seed: 0,
            filters: vec![FilterKind::Gsf, FilterKind::Ngsf],
            ngsf: NgsfConfig::default(),
            cloud_snapshots: vec![0, 1],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn initial_cov_matrix(&self) -> Result<DMatrix<f64>, HarnessError> {
        rows(&self.initial_cov, "initial_cov")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.duffing.validate()?;
        self.duffing.steps_per_sample()?;
        self.em.validate(self.ensemble_size)?;
        let model = self.measurement.model()?;
        if model.state_dim() != 2 {
            return Err(HarnessError::Config(format!(
                "measurement.c must have 2 columns, found {}",
                model.state_dim()
            )));
        }
        let p0 = self.initial_cov_matrix()?;
        if p0.shape() != (2, 2) {
            return Err(HarnessError::Config("initial_cov must be 2x2".into()));
        }
        wfilter_core::Gaussian::new(nalgebra::DVector::from_column_slice(&self.true_x0), p0)?;
        if self.true_x0.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Config("true_x0 must be finite".into()));
        }
        if self.filters.is_empty() {
            return Err(HarnessError::Config("at least one filter must be enabled".into()));
        }
        let mut seen = self.filters.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.filters.len() {
            return Err(HarnessError::Config("filters contain duplicates".into()));
        }
        if !(self.ngsf.tol >= 0.0) {
            return Err(HarnessError::Config("ngsf.tol must be non-negative".into()));
        }
        Ok(())
    }
}
