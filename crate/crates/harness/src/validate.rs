//! Quick invariant suites behind the `validate` subcommand.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfilter_core::{
    duffing_rhs, gsf_update, integrate_rk4, kalman_update, ngsf_solve, w2, w2_gaussian_gaussian, DuffingModel,
    Gaussian, GaussianMixture, LinearMeasurementModel, NgsfOptions, NgsfProblem,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Gaussian<f64> {
    Gaussian::new(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)), spd(n, rng)).expect("spd")
}

fn model(n: usize, m: usize, rng: &mut ChaCha8Rng) -> LinearMeasurementModel<f64> {
    LinearMeasurementModel::new(DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)), spd(m, rng)).expect("spd")
}

fn kalman_information_form(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (n, m) = (rng.random_range(1..5), rng.random_range(1..4));
        let prior = gaussian(n, rng);
        let sensor = model(n, m, rng);
        let y = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let Ok(post) = kalman_update(&prior, prior.cov(), &sensor, &y) else {
            return fail("kalman-information-form", "update rejected a well-posed instance");
        };
        let info = prior.cov().clone().try_inverse().unwrap();
        let r_inv = sensor.r().clone().try_inverse().unwrap();
        let cov = (&info + sensor.c().transpose() * &r_inv * sensor.c()).try_inverse().unwrap();
        let mean = &cov * (&info * prior.mean() + sensor.c().transpose() * &r_inv * &y);
        worst = worst
            .max((post.cov() - &cov).norm() / cov.norm())
            .max((post.mean() - mean).norm() / prior.mean().norm().max(1.0));
    }
    outcome("kalman-information-form", worst < 1e-10, format!("max relative error {worst:.3e}"))
}

fn w2_metric(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..4);
        let (a, b, c) = (gaussian(n, rng), gaussian(n, rng), gaussian(n, rng));
        let d = |x: &Gaussian<f64>, y: &Gaussian<f64>| w2(w2_gaussian_gaussian(x, y).unwrap_or(f64::NAN));
        worst = worst
            .max((d(&a, &b) - d(&b, &a)).abs())
            .max(d(&a, &c) - d(&a, &b) - d(&b, &c))
            .max(w2_gaussian_gaussian(&a, &a).unwrap_or(f64::NAN));
    }
    outcome("w2-metric", worst < 1e-8, format!("max violation {worst:.3e}"))
}

fn gsf_single_node(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let g = gaussian(2, rng);
    let sensor = model(2, 1, rng);
    let y = DVector::from_element(1, 0.3);
    let (Ok(gsf), Ok(kf)) = (
        gsf_update(&GaussianMixture::single(g.clone()), &sensor, &y),
        kalman_update(&g, g.cov(), &sensor, &y),
    ) else {
        return fail("gsf-single-node", "update failed");
    };
    let node = &gsf.posterior.nodes()[0];
    let diff = (node.mean() - kf.mean()).amax().max((node.cov() - kf.cov()).amax());
    outcome("gsf-single-node", diff < 1e-14, format!("max difference {diff:.3e}"))
}

fn ngsf_descent(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut violations = 0;
    for _ in 0..20 {
        let nodes: Vec<Gaussian<f64>> = (0..4).map(|_| gaussian(2, rng)).collect();
        let prior = GaussianMixture::new(vec![0.25; 4], nodes).expect("uniform weights");
        let y = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let Ok((problem, _)) = NgsfProblem::warm_started(prior, model(2, 1, rng), y) else {
            return fail("ngsf-descent", "warm start failed");
        };
        let Ok(sol) = ngsf_solve(&problem, &NgsfOptions::default()) else {
            return fail("ngsf-descent", "solver failed");
        };
        if sol.cost_trajectory.windows(2).any(|w| w[1] > w[0]) || sol.final_cost() > sol.initial_cost() {
            violations += 1;
        }
    }
    outcome("ngsf-descent", violations == 0, format!("{violations} non-monotone trajectories"))
}

fn rk4_order() -> CheckOutcome {
    let model = DuffingModel::default();
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let run = |steps: usize| integrate_rk4(&x0, |x| duffing_rhs(&model, x), 0.5 / steps as f64, steps);
    let (Ok(a), Ok(b), Ok(reference)) = (run(25), run(50), run(3200)) else {
        return fail("rk4-order", "integration diverged");
    };
    let order = ((&a - &reference).norm() / (&b - &reference).norm()).log2();
    outcome("rk4-order", (3.7..=4.3).contains(&order), format!("observed order {order:.3}"))
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

fn fail(name: &'static str, detail: &str) -> CheckOutcome {
    outcome(name, false, detail.to_string())
}

pub fn run_validation(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        kalman_information_form(&mut rng),
        w2_metric(&mut rng),
        gsf_single_node(&mut rng),
        ngsf_descent(&mut rng),
        rk4_order(),
    ]
}
