use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wfilter_harness::validate::run_validation;
use wfilter_harness::{
    emit_comparison, emit_outputs, monte_carlo_compare, parse_filters, run_experiment, summarize_run,
    ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "wfilter", version, about = "Gaussian sum filter benchmark on the Duffing oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its outputs.
    Run(Common),
    /// Paired Monte Carlo comparison across derived seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// Run the built-in invariant suites; with --config, also validate it.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of gsf,ngsf,kf_momentmatch.
    #[arg(long)]
    filters: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(list) = &self.filters {
            config.filters = parse_filters(list)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_for(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_validation() { 1 } else { 2 })
}

fn run(common: &Common) -> Result<(), HarnessError> {
    let config = common.resolve()?;
    let dir = config.output_dir.clone();
    match run_experiment(&config) {
        Ok(run) => {
            let summary = summarize_run(&run);
            emit_outputs(&run.config, &run.records, &run.snapshots, &summary, &dir)?;
            for row in &summary.rows {
                println!("{:<15} rmse {:?} error variance {:?}", row.filter, row.rmse, row.error_variance);
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
        Err(failure) => {
            let partial = failure.partial;
            let summary = summarize_run(&partial);
            emit_outputs(&partial.config, &partial.records, &partial.snapshots, &summary, &dir)?;
            eprintln!("partial records written to {}", dir.display());
            Err(failure.error)
        }
    }
}

fn compare(common: &Common, runs: usize) -> Result<(), HarnessError> {
    let config = common.resolve()?;
    let table = monte_carlo_compare(&config, runs)?;
    emit_comparison(&config, &table, &config.output_dir)?;
    for row in &table.rows {
        print!("{:<15} rmse {:?} error variance {:?}", row.filter, row.rmse, row.error_variance);
        if let (Some(gap), Some(bad)) = (row.mean_cost_gap, row.dominance_violations) {
            print!(" mean cost gap {gap:.3e} dominance violations {bad}");
        }
        println!();
    }
    if let Some(paired) = &table.paired_error_variance {
        for p in paired {
            println!(
                "x{}: ngsf lower in {} runs, gsf lower in {}, ties {}",
                p.state + 1,
                p.ngsf_lower,
                p.gsf_lower,
                p.ties
            );
        }
    }
    println!("wrote {}", config.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => run(common),
        Command::Compare { common, runs } => compare(common, *runs),
        Command::Validate { config, seed } => {
            if let Some(path) = config {
                if let Err(e) = ExperimentConfig::load(path).and_then(|c| c.validate()) {
                    return exit_for(&e);
                }
            }
            let checks = run_validation(*seed);
            for c in &checks {
                println!("{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                return ExitCode::SUCCESS;
            }
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
