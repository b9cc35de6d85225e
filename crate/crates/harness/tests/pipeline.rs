use std::fs;
use std::path::Path;

use wfilter_harness::output::{list_outputs, timeseries_header};
use wfilter_harness::summary::ErrorStats;
use wfilter_harness::{
    emit_outputs, monte_carlo_compare, run_experiment, summarize_run, ExperimentConfig, FilterKind, MeasurementConfig,
    NgsfConfig,
};

fn small(seed: u64, horizon: usize, filters: Vec<FilterKind>) -> ExperimentConfig {
    let mut config = ExperimentConfig {
        ensemble_size: 400,
        horizon_steps: horizon,
        master_seed: seed,
        filters,
        cloud_snapshots: vec![0, 1],
        ..ExperimentConfig::default()
    };
    config.em.n_components = 4;
    config.em.max_iters = 50;
    config.em.restarts = 2;
    config
}

fn run_to(config: &ExperimentConfig, dir: &Path) -> ExperimentConfig {
    let run = run_experiment(config).unwrap();
    emit_outputs(&run.config, &run.records, &run.snapshots, &summarize_run(&run), dir).unwrap();
    run.config
}

#[test]
fn near_perfect_sensor_pins_measured_coordinate() {
    let mut config = small(3, 3, vec![FilterKind::Gsf, FilterKind::Ngsf, FilterKind::KfMomentmatch]);
    config.measurement = MeasurementConfig {
        c: vec![vec![1.0, 0.0]],
        r: vec![vec![1e-12]],
    };
    let run = run_experiment(&config).unwrap();
    for record in &run.records[1..] {
        for fs in &record.filters {
            assert!((fs.estimate[0] - record.truth[0]).abs() < 1e-3, "{} step {}", fs.filter, record.step);
        }
    }
}

#[test]
fn zero_horizon_emits_initial_record_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(1, 0, vec![FilterKind::Gsf]);
    let run = run_experiment(&config).unwrap();
    assert_eq!(run.records.len(), 1);
    assert!(run.records[0].measurement.is_none());
    run_to(&config, dir.path());
    let text = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn empty_record_stream_writes_headers() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(1, 0, vec![FilterKind::Gsf]);
    let run = run_experiment(&config).unwrap();
    emit_outputs(&config, &[], &[], &summarize_run(&run), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(text.trim_end(), timeseries_header(1).join(","));
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(5, 1, vec![FilterKind::Gsf]);
    run_to(&config, dir.path());
    let back = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(back, config);
    assert!(ExperimentConfig::from_json(r#"{"horizon_steps": 2}"#).unwrap().horizon_steps == 2);
    assert!(ExperimentConfig::from_json(r#"{"horizon": 2}"#).is_err());
}

#[test]
fn identical_seed_gives_identical_files() {
    let config = small(11, 2, vec![FilterKind::Gsf, FilterKind::Ngsf]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_to(&config, a.path());
    run_to(&config, b.path());
    let files = list_outputs(a.path()).unwrap();
    assert_eq!(files, list_outputs(b.path()).unwrap());
    assert!(files.len() > 4);
    for f in files {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{}", f.display());
    }
}

#[test]
fn filters_share_their_first_prior() {
    let run = run_experiment(&small(4, 2, vec![FilterKind::Gsf, FilterKind::Ngsf, FilterKind::KfMomentmatch])).unwrap();
    let first = &run.records[1].filters;
    assert_eq!(first[0].prior, first[1].prior);
    assert_eq!(first[1].prior, first[2].prior);
}

#[test]
fn summary_recomputes_from_timeseries() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(8, 4, vec![FilterKind::Gsf, FilterKind::Ngsf]);
    run_to(&config, dir.path());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("timeseries.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    for row in summary["rows"].as_array().unwrap() {
        let filter = row["filter"].as_str().unwrap();
        for (j, state) in ["error_x1", "error_x2"].iter().enumerate() {
            let errors: Vec<f64> = rows
                .iter()
                .filter(|r| &r[col("filter")] == filter && !r[col("y1")].is_empty())
                .map(|r| r[col(state)].parse().unwrap())
                .collect();
            let stats = ErrorStats::of(&errors);
            assert!((stats.rmse - row["rmse"][j].as_f64().unwrap()).abs() < 1e-12);
            assert!((stats.variance - row["error_variance"][j].as_f64().unwrap()).abs() < 1e-12);
        }
        if filter == "ngsf" {
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| &r[col("filter")] == "ngsf" && !r[col("warm_cost")].is_empty())
                .map(|r| r[col("exact_cost")].parse::<f64>().unwrap() - r[col("warm_cost")].parse::<f64>().unwrap())
                .collect();
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            assert!((mean - row["mean_cost_gap"].as_f64().unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn gsf_only_comparison_has_no_gap_columns() {
    let table = monte_carlo_compare(&small(2, 2, vec![FilterKind::Gsf]), 2).unwrap();
    assert_eq!(table.rows.len(), 1);
    let json = serde_json::to_value(&table).unwrap();
    assert!(json["rows"][0].get("mean_cost_gap").is_none());
    assert!(json.get("paired_error_variance").is_none());
}

#[test]
fn disabled_optimizer_matches_gsf_statistics() {
    let mut config = small(6, 3, vec![FilterKind::Gsf, FilterKind::Ngsf]);
    config.ngsf = NgsfConfig {
        max_iters: 0,
        ..NgsfConfig::default()
    };
    let table = monte_carlo_compare(&config, 2).unwrap();
    assert_eq!(table.rows[0].rmse, table.rows[1].rmse);
    assert_eq!(table.rows[0].error_variance, table.rows[1].error_variance);
    assert_eq!(table.rows[1].mean_cost_gap, Some(0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = small(1, 1, vec![]);
    assert!(config.validate().unwrap_err().is_validation());
    config.filters = vec![FilterKind::Gsf];
    config.ensemble_size = 10;
    assert!(config.validate().unwrap_err().is_validation());
    assert!(monte_carlo_compare(&small(1, 1, vec![FilterKind::Gsf]), 1).is_err());
}
