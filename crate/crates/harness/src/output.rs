use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiment::{CloudSnapshot, StepRecord};
use crate::summary::{ComparisonTable, RunSummary};
use crate::HarnessError;

/// Column names of `timeseries.csv` for `m` measurement components.
pub fn timeseries_header(m: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["step", "time", "filter", "truth_x1", "truth_x2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=m).map(|i| format!("y{i}")));
    cols.extend(
        [
            "estimate_x1",
            "estimate_x2",
            "std_x1",
            "std_x2",
            "error_x1",
            "error_x2",
            "exact_cost",
            "warm_cost",
            "ngsf_iterations",
            "ngsf_converged",
            "max_weight",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::io(path, std::io::Error::other(e))
}

/// Writes `config.json`, `timeseries.csv`, `clouds/*.csv`, `mixtures/*.json`
/// and `summary.json` under `dir`.
pub fn emit_outputs(
    config: &ExperimentConfig,
    records: &[StepRecord],
    snapshots: &[CloudSnapshot],
    summary: &RunSummary,
    dir: &Path,
) -> Result<(), HarnessError> {
    let clouds_dir = dir.join("clouds");
    let mixtures_dir = dir.join("mixtures");
    for d in [dir, &clouds_dir, &mixtures_dir] {
        fs::create_dir_all(d).map_err(|e| HarnessError::io(d, e))?;
    }
    write_file(&dir.join("config.json"), config.to_json().as_bytes())?;

    let m = config.measurement.model()?.meas_dim();
    let path = dir.join("timeseries.csv");
    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(timeseries_header(m)).map_err(csv_err(&path))?;
    for record in records {
        for fs in &record.filters {
            let mut row = vec![
                record.step.to_string(),
                record.time.to_string(),
                fs.filter.to_string(),
            ];
            row.extend(record.truth.iter().map(f64::to_string));
            match &record.measurement {
                Some(y) => row.extend(y.iter().map(f64::to_string)),
                None => row.extend((0..m).map(|_| String::new())),
            }
            row.extend(fs.estimate.iter().map(f64::to_string));
            row.extend(fs.std.iter().map(f64::to_string));
            row.extend(fs.error.iter().map(f64::to_string));
            row.push(opt(fs.exact_cost));
            row.push(opt(fs.ngsf.as_ref().map(|s| s.warm_cost)));
            row.push(opt(fs.ngsf.as_ref().map(|s| s.iterations)));
            row.push(opt(fs.ngsf.as_ref().map(|s| s.converged)));
            row.push(fs.posterior.weights().iter().copied().fold(0.0, f64::max).to_string());
            w.write_record(&row).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    for snap in snapshots {
        let path = clouds_dir.join(format!("step{:04}_{}.csv", snap.step, snap.label));
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        snap.cloud
            .write_csv(BufWriter::new(file))
            .map_err(|e| HarnessError::io(&path, std::io::Error::other(e)))?;
    }

    for record in records {
        for fs in &record.filters {
            if let Some(prior) = &fs.prior {
                let path = mixtures_dir.join(format!("step{:04}_{}_prior.json", record.step, fs.filter));
                write_file(&path, prior.to_json().as_bytes())?;
            }
            let path = mixtures_dir.join(format!("step{:04}_{}_posterior.json", record.step, fs.filter));
            write_file(&path, fs.posterior.to_json().as_bytes())?;
        }
    }

    write_json(&dir.join("summary.json"), summary)
}

/// Writes `config.json`, `summary.json` and `runs.csv` for a comparison.
pub fn emit_comparison(config: &ExperimentConfig, table: &ComparisonTable, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("config.json"), config.to_json().as_bytes())?;
    write_json(&dir.join("summary.json"), table)?;
    let path = dir.join("runs.csv");
    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["run", "seed", "filter", "rmse_x1", "rmse_x2", "error_variance_x1", "error_variance_x2"])
        .map_err(csv_err(&path))?;
    for p in &table.per_run {
        let mut row = vec![p.run.to_string(), p.seed.to_string(), p.filter.to_string()];
        row.extend(p.rmse.iter().map(f64::to_string));
        row.extend(p.error_variance.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Every file under `dir`, sorted, as paths relative to `dir`.
pub fn list_outputs(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
            let path = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

