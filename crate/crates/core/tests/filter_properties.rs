mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfilter_core::gsf::component_cost;
use wfilter_core::ngsf::{gain_gradient_residual, kkt_residual};
use wfilter_core::{
    gsf_bound_cost, gsf_update, kalman_update, ngsf_cost, ngsf_gradients, ngsf_solve, ngsf_update,
    GaussianMixture, NgsfOptions, NgsfProblem,
};

#[test]
fn gsf_simplex_and_contraction_on_random_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..500 {
        let (k, n, m) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(1..3));
        let prior = random_mixture(k, n, &mut rng);
        let model = random_model(n, m, &mut rng);
        let y = random_vector(m, 3.0, &mut rng);
        let out = gsf_update(&prior, &model, &y).unwrap();
        let w = out.posterior.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
        for (before, after) in prior.nodes().iter().zip(out.posterior.nodes()) {
            assert!(after.cov().trace() <= before.cov().trace() + 1e-12);
        }
    }
}

#[test]
fn gsf_nodes_are_kalman_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..50 {
        let prior = random_mixture(3, 2, &mut rng);
        let model = random_model(2, 1, &mut rng);
        let y = random_vector(1, 2.0, &mut rng);
        let out = gsf_update(&prior, &model, &y).unwrap();
        for (node, post) in prior.nodes().iter().zip(out.posterior.nodes()) {
            let (mean, cov) = information_update(node.mean(), node.cov(), model.c(), model.r(), &y);
            assert!((post.mean() - mean).amax() < 1e-10);
            assert!(rel_err(post.cov(), &cov) < 1e-10);
        }
    }
}

#[test]
fn gsf_weights_ignore_prior_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let prior = random_mixture(4, 2, &mut rng);
    let model = random_model(2, 1, &mut rng);
    let y = random_vector(1, 2.0, &mut rng);
    let base = gsf_update(&prior, &model, &y).unwrap();
    // Reweighting by a likelihood and renormalizing commutes with scaling.
    let scaled: Vec<f64> = prior.weights().iter().map(|w| w * 1e-200).collect();
    let total: f64 = scaled.iter().sum();
    let rescaled = prior.with_weights(scaled.iter().map(|w| w / total).collect()).unwrap();
    let again = gsf_update(&rescaled, &model, &y).unwrap();
    for (a, b) in base.posterior.weights().iter().zip(again.posterior.weights()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gsf_gains_minimize_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..30 {
        let prior = random_mixture(3, 2, &mut rng);
        let model = random_model(2, 2, &mut rng);
        let out = gsf_update(&prior, &model, &DVector::zeros(2)).unwrap();
        let bound = gsf_bound_cost(&out);
        for _ in 0..10 {
            let perturbed: f64 = prior
                .nodes()
                .iter()
                .zip(&out.gains)
                .map(|(node, g)| {
                    let dh = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.05..0.05));
                    component_cost(&(&g.h + dh), node.cov(), &model)
                })
                .sum();
            assert!(perturbed >= bound - 1e-12);
        }
    }
}

#[test]
fn ngsf_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    for _ in 0..50 {
        let k = rng.random_range(2..5);
        let (n, m) = (rng.random_range(1..4), rng.random_range(1..3));
        let prior = random_mixture(k, n, &mut rng);
        let model = random_model(n, m, &mut rng);
        let weights = random_weights(k, &mut rng);
        let gains: Vec<DMatrix<f64>> = (0..k)
            .map(|_| DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let (gw, gh) = ngsf_gradients(&weights, &gains, &prior, &model).unwrap();
        // The cost is affine in each λᵢ, so the λ-gradient is the node cost.
        for i in 0..k {
            let own = component_cost(&gains[i], prior.nodes()[i].cov(), &model);
            assert!((gw[i] - own).abs() <= 1e-12 * own.max(1.0));
        }
        let cost_with = |hs: &[DMatrix<f64>]| -> f64 {
            weights
                .iter()
                .zip(hs)
                .zip(prior.nodes())
                .map(|((w, h), node)| w * component_cost(h, node.cov(), &model))
                .sum()
        };
        let step = 1e-5;
        for i in 0..k {
            let mut numeric = DMatrix::zeros(n, m);
            for r in 0..n {
                for c in 0..m {
                    let mut plus = gains.clone();
                    let mut minus = gains.clone();
                    plus[i][(r, c)] += step;
                    minus[i][(r, c)] -= step;
                    numeric[(r, c)] = (cost_with(&plus) - cost_with(&minus)) / (2.0 * step);
                }
            }
            let scale = numeric.norm().max(1e-3);
            assert!((&gh[i] - &numeric).norm() / scale < 1e-6);
        }
    }
}

#[test]
fn ngsf_descends_and_stays_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(305);
    for _ in 0..100 {
        let prior = random_mixture(3, 2, &mut rng);
        let model = random_model(2, 1, &mut rng);
        let y = random_vector(1, 2.0, &mut rng);
        let (problem, gsf) = NgsfProblem::warm_started(prior, model, y).unwrap();
        let opts = NgsfOptions::default();
        let sol = ngsf_solve(&problem, &opts).unwrap();
        assert!(sol.cost_trajectory.windows(2).all(|w| w[1] <= w[0]));
        let gsf_cost = ngsf_cost(
            gsf.posterior.weights(),
            &gsf.gains.iter().map(|g| g.h.clone()).collect::<Vec<_>>(),
            &problem.prior,
            &problem.model,
        )
        .unwrap();
        assert!(sol.final_cost() <= gsf_cost);
        if sol.converged {
            assert!(kkt_residual(&problem, &sol).unwrap() < 10.0 * opts.tol);
            assert!(gain_gradient_residual(&problem, &sol).unwrap() < 1e-6);
        }
        let post = ngsf_update(&problem, &opts).unwrap();
        for node in post.posterior.nodes() {
            assert!(node.cov().symmetric_eigenvalues().min() > 0.0);
        }
    }
}

#[test]
fn ngsf_symmetric_pair_splits_evenly() {
    let node_a = wfilter_core::Gaussian::new(DVector::from_vec(vec![-1.0]), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let node_b = wfilter_core::Gaussian::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let prior = GaussianMixture::new(vec![0.5, 0.5], vec![node_a, node_b]).unwrap();
    let model = wfilter_core::LinearMeasurementModel::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.5),
    )
    .unwrap();
    let (problem, _) = NgsfProblem::warm_started(prior, model, DVector::zeros(1)).unwrap();
    let sol = ngsf_solve(&problem, &NgsfOptions::<f64>::default()).unwrap();
    // Equal node costs make every simplex point optimal; the warm start is kept.
    assert!((sol.weights[0] - 0.5).abs() < 1e-12);
    assert!((sol.final_cost() - sol.initial_cost()).abs() < 1e-14);
}

#[test]
fn ngsf_single_node_reproduces_kalman() {
    let mut rng = ChaCha8Rng::seed_from_u64(306);
    let g = random_gaussian(3, &mut rng);
    let model = random_model(3, 2, &mut rng);
    let y = random_vector(2, 1.0, &mut rng);
    let (problem, _) = NgsfProblem::warm_started(GaussianMixture::single(g.clone()), model.clone(), y.clone()).unwrap();
    let post = ngsf_update(&problem, &NgsfOptions::default()).unwrap();
    let kalman = kalman_update(&g, g.cov(), &model, &y).unwrap();
    assert!((post.posterior.nodes()[0].mean() - kalman.mean()).amax() < 1e-12);
    assert!((post.posterior.nodes()[0].cov() - kalman.cov()).amax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_is_linear_along_simplex_edges(seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_mixture(3, 2, &mut rng);
        let model = random_model(2, 1, &mut rng);
        let gains: Vec<DMatrix<f64>> = (0..3).map(|_| DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0))).collect();
        let a = random_weights(3, &mut rng);
        let b = random_weights(3, &mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = ngsf_cost(&mid, &gains, &prior, &model).unwrap();
        let rhs = t * ngsf_cost(&a, &gains, &prior, &model).unwrap()
            + (1.0 - t) * ngsf_cost(&b, &gains, &prior, &model).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn ngsf_posterior_permutes_with_nodes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_mixture(3, 2, &mut rng);
        let model = random_model(2, 1, &mut rng);
        let y = random_vector(1, 1.0, &mut rng);
        let order = [2usize, 0, 1];
        let permuted = GaussianMixture::new(
            order.iter().map(|&i| prior.weights()[i]).collect(),
            order.iter().map(|&i| prior.nodes()[i].clone()).collect(),
        ).unwrap();
        let opts = NgsfOptions { max_iters: 0, ..NgsfOptions::default() };
        let (p1, _) = NgsfProblem::warm_started(prior, model.clone(), y.clone()).unwrap();
        let (p2, _) = NgsfProblem::warm_started(permuted, model, y).unwrap();
        let a = ngsf_update(&p1, &opts).unwrap();
        let b = ngsf_update(&p2, &opts).unwrap();
        for (j, &i) in order.iter().enumerate() {
            prop_assert!((a.posterior.weights()[i] - b.posterior.weights()[j]).abs() < 1e-12);
        }
    }
}
