use std::rc::Rc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use wfilter_core::linalg::psd_factor;
use wfilter_core::{
    duffing_rhs, fit_gmm_em, gsf_update, integrate_rk4, kalman_update, mixture_mean_cov, ngsf_posterior,
    ngsf_solve, propagate_cloud, sample_gaussian, sample_mixture, EmFit, EmFitConfig, EnsembleCloud, FilterError, Gaussian,
    GaussianMixture, LinearMeasurementModel, NgsfProblem,
};

use crate::config::{ExperimentConfig, FilterKind};
use crate::seeds::{stream_rng, Stream};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct NgsfSummary {
    /// Exact objective at the GSF warm start.
    pub warm_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warm_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

/// One filter's view of one step.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub filter: FilterKind,
    /// Mixture fitted to the propagated cloud; `None` at step 0.
    pub prior: Option<GaussianMixture<f64>>,
    pub posterior: GaussianMixture<f64>,
    /// Moment-matched posterior mean.
    pub estimate: DVector<f64>,
    /// Square roots of the moment-matched posterior variances.
    pub std: DVector<f64>,
    pub error: DVector<f64>,
    /// Exact weighted objective `Σλᵢcᵢ` at the filter's own solution.
    pub exact_cost: Option<f64>,
    pub ngsf: Option<NgsfSummary>,
    pub em_log_likelihood: Option<f64>,
    /// Update time only; kept in memory, never written to disk.
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub truth: DVector<f64>,
    pub measurement: Option<DVector<f64>>,
    pub filters: Vec<FilterStep>,
}

#[derive(Debug, Clone)]
pub struct CloudSnapshot {
    pub step: usize,
    /// `initial` or the filter name.
    pub label: String,
    pub cloud: EnsembleCloud<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<CloudSnapshot>,
}

/// An aborted run with every record completed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: ExperimentRun,
    pub error: HarnessError,
}

struct Prepared {
    input: Rc<EnsembleCloud<f64>>,
    propagated: Rc<EnsembleCloud<f64>>,
    fit: Rc<EmFit<f64>>,
}

fn step_error(step: usize, filter: Option<FilterKind>, module: &'static str) -> impl Fn(FilterError) -> HarnessError {
    move |source| HarnessError::Step {
        step,
        filter,
        module,
        source,
    }
}

/// EM fit of the prior, dropping one component at a time while every restart
/// keeps collapsing.
fn fit_prior(cloud: &EnsembleCloud<f64>, em: &EmFitConfig, seed: u64, step: usize) -> Result<EmFit<f64>, FilterError> {
    let mut cfg = em.clone();
    loop {
        let mut rng = stream_rng(seed, Stream::EmInit, step as u64, em.init_seed);
        match fit_gmm_em(cloud, &cfg, &mut rng) {
            Err(FilterError::Fit(_)) if cfg.n_components > 1 => cfg.n_components -= 1,
            other => return other,
        }
    }
}

/// Runs the propagate / fit / update / resample loop for every enabled filter.
///
/// All filters share the initial cloud, every measurement, and every
/// per-step random stream, so they see bit-identical priors at step 1 and
/// identical clouds whenever their posteriors coincide.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun, Box<RunFailure>> {
    let mut run = ExperimentRun {
        config: config.clone(),
        records: Vec::new(),
        snapshots: Vec::new(),
    };
    match drive(config, &mut run) {
        Ok(()) => Ok(run),
        Err(error) => Err(Box::new(RunFailure { partial: run, error })),
    }
}

fn drive(config: &ExperimentConfig, run: &mut ExperimentRun) -> Result<(), HarnessError> {
    config.validate()?;
    let model = config.measurement.model()?;
    let seed = config.master_seed;
    let substeps = config.duffing.steps_per_sample()?;
    let opts = config.ngsf.options();

    let belief = Gaussian::new(DVector::from_column_slice(&config.true_x0), config.initial_cov_matrix()?)?;
    let initial = sample_gaussian(
        &belief,
        config.ensemble_size,
        &mut stream_rng(seed, Stream::InitialCloud, 0, 0),
    )
    .map_err(step_error(0, None, "sampling"))?;
    if config.cloud_snapshots.contains(&0) {
        run.snapshots.push(CloudSnapshot {
            step: 0,
            label: "initial".into(),
            cloud: initial.clone(),
        });
    }

    let mut truth = belief.mean().clone();
    let start = GaussianMixture::single(belief.clone());
    run.records.push(StepRecord {
        step: 0,
        time: 0.0,
        truth: truth.clone(),
        measurement: None,
        filters: config
            .filters
            .iter()
            .map(|&filter| summarize(filter, None, start.clone(), &truth, None, None, None, Duration::ZERO))
            .collect(),
    });

    let initial = Rc::new(initial);
    let mut clouds: Vec<Rc<EnsembleCloud<f64>>> = config.filters.iter().map(|_| Rc::clone(&initial)).collect();
    let r_factor = psd_factor(model.r());

    for step in 1..=config.horizon_steps {
        truth = integrate_rk4(&truth, |x| duffing_rhs(&config.duffing, x), config.duffing.dt, substeps)
            .map_err(step_error(step, None, "truth propagation"))?;
        let mut noise_rng = stream_rng(seed, Stream::Measurement, step as u64, 0);
        let v = DVector::from_fn(model.meas_dim(), |_, _| StandardNormal.sample(&mut noise_rng));
        let y = model.c() * &truth + &r_factor * v;

        let mut prepared: Vec<Prepared> = Vec::new();
        let mut record = StepRecord {
            step,
            time: step as f64 * config.duffing.sample_time,
            truth: truth.clone(),
            measurement: Some(y.clone()),
            filters: Vec::with_capacity(config.filters.len()),
        };
        let mut next_clouds = Vec::with_capacity(config.filters.len());
        let mut resampled: Vec<(GaussianMixture<f64>, Rc<EnsembleCloud<f64>>)> = Vec::new();

        for (slot, &filter) in config.filters.iter().enumerate() {
            let input = &clouds[slot];
            let index = match prepared.iter().position(|p| Rc::ptr_eq(&p.input, input) || *p.input == **input) {
                Some(i) => i,
                None => {
                    let propagated = propagate_cloud(input, &config.duffing, config.duffing.sample_time)
                        .map_err(step_error(step, Some(filter), "propagation"))?;
                    let fit = fit_prior(&propagated, &config.em, seed, step)
                        .map_err(step_error(step, Some(filter), "em fit"))?;
                    prepared.push(Prepared {
                        input: Rc::clone(input),
                        propagated: Rc::new(propagated),
                        fit: Rc::new(fit),
                    });
                    prepared.len() - 1
                }
            };
            let Prepared { propagated, fit, .. } = &prepared[index];
            if config.cloud_snapshots.contains(&step) {
                run.snapshots.push(CloudSnapshot {
                    step,
                    label: filter.name().into(),
                    cloud: (**propagated).clone(),
                });
            }

            let started = Instant::now();
            let (posterior, exact_cost, ngsf) = update(filter, &fit.mixture, &model, &y, &opts)
                .map_err(step_error(step, Some(filter), filter.name()))?;
            let elapsed = started.elapsed();

            let cloud = match resampled.iter().find(|(mix, _)| *mix == posterior) {
                Some((_, cloud)) => Rc::clone(cloud),
                None => {
                    let mut rng = stream_rng(seed, Stream::Resample, step as u64, 0);
                    let cloud = Rc::new(
                        sample_mixture(&posterior, config.ensemble_size, &mut rng)
                            .map_err(step_error(step, Some(filter), "resampling"))?,
                    );
                    resampled.push((posterior.clone(), Rc::clone(&cloud)));
                    cloud
                }
            };
            next_clouds.push(cloud);

            record.filters.push(summarize(
                filter,
                Some(fit.mixture.clone()),
                posterior,
                &truth,
                exact_cost,
                ngsf,
                Some(fit.log_likelihood),
                elapsed,
            ));
        }
        run.records.push(record);
        clouds = next_clouds;
    }
    Ok(())
}

type Update = (GaussianMixture<f64>, Option<f64>, Option<NgsfSummary>);

fn update(
    filter: FilterKind,
    prior: &GaussianMixture<f64>,
    model: &LinearMeasurementModel<f64>,
    y: &DVector<f64>,
    opts: &wfilter_core::NgsfOptions<f64>,
) -> Result<Update, FilterError> {
    match filter {
        FilterKind::Gsf => {
            let out = gsf_update(prior, model, y)?;
            let cost = out.weighted_cost();
            Ok((out.posterior, Some(cost), None))
        }
        FilterKind::Ngsf => {
            let (problem, _) = NgsfProblem::warm_started(prior.clone(), model.clone(), y.clone())?;
            let solution = ngsf_solve(&problem, opts)?;
            let out = ngsf_posterior(&problem, &solution)?;
            let summary = NgsfSummary {
                warm_cost: solution.initial_cost(),
                final_cost: solution.final_cost(),
                iterations: solution.iterations,
                converged: solution.converged,
                warm_weights: problem.warm_weights.clone(),
                weights: solution.weights.clone(),
            };
            Ok((out.posterior, Some(solution.final_cost()), Some(summary)))
        }
        FilterKind::KfMomentmatch => {
            let (mean, cov) = mixture_mean_cov(prior);
            let matched = Gaussian::with_floor(mean, cov, 0.0)?;
            let post = kalman_update(&matched, matched.cov(), model, y)?;
            let cost = post.cov().trace();
            Ok((GaussianMixture::single(post), Some(cost), None))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    filter: FilterKind,
    prior: Option<GaussianMixture<f64>>,
    posterior: GaussianMixture<f64>,
    truth: &DVector<f64>,
    exact_cost: Option<f64>,
    ngsf: Option<NgsfSummary>,
    em_log_likelihood: Option<f64>,
    wall_time: Duration,
) -> FilterStep {
    let (estimate, cov): (DVector<f64>, DMatrix<f64>) = mixture_mean_cov(&posterior);
    let std = cov.diagonal().map(|v| v.max(0.0).sqrt());
    let error = &estimate - truth;
    FilterStep {
        filter,
        prior,
        posterior,
        estimate,
        std,
        error,
        exact_cost,
        ngsf,
        em_log_likelihood,
        wall_time,
    }
}
