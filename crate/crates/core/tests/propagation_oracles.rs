use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfilter_core::{
    duffing_rhs, fit_gmm_em, integrate_rk4, mixture_mean_cov, propagate_cloud, sample_gaussian,
    DuffingModel, EmFitConfig, EnsembleCloud, Gaussian,
};

fn duffing_at(dt: f64, duration: f64) -> DVector<f64> {
    let model = DuffingModel::default();
    let steps = (duration / dt).round() as usize;
    integrate_rk4(&DVector::from_vec(vec![1.0, 0.0]), |x| duffing_rhs(&model, x), dt, steps).unwrap()
}

#[test]
fn rk4_is_fourth_order_on_duffing() {
    let reference = duffing_at(0.5 / 6400.0, 0.5);
    let dts = [0.5 / 25.0, 0.5 / 50.0, 0.5 / 100.0];
    let errs: Vec<f64> = dts.iter().map(|&dt| (duffing_at(dt, 0.5) - &reference).norm()).collect();
    for pair in errs.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!((3.7..=4.3).contains(&order), "order {order}");
    }
}

#[test]
fn propagated_normal_cloud_is_not_gaussian() {
    let start = sample_gaussian(&Gaussian::<f64>::standard(2), 10_000, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let out = propagate_cloud(&start, &DuffingModel::default(), 0.5).unwrap();
    let kurtosis: Vec<f64> = (0..2)
        .map(|j| {
            let col = out.particles().column(j);
            let mean = col.mean();
            let m2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            let m4 = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / col.len() as f64;
            m4 / (m2 * m2) - 3.0
        })
        .collect();
    assert!(kurtosis.iter().any(|k| k.abs() > 0.1), "{kurtosis:?}");
}

#[test]
fn em_fit_matches_propagated_cloud_moments() {
    let start = sample_gaussian(&Gaussian::<f64>::standard(2), 5_000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let cloud = propagate_cloud(&start, &DuffingModel::default(), 0.5).unwrap();
    let fit = fit_gmm_em(&cloud, &EmFitConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert!(fit.history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
    let (mean, cov) = mixture_mean_cov(&fit.mixture);
    let sample_cov = cloud.sample_cov();
    let mean_err = (mean - cloud.sample_mean()).norm() / sample_cov.trace().sqrt();
    let cov_err = (cov - &sample_cov).norm() / sample_cov.norm();
    assert!(mean_err < 0.1 && cov_err < 0.1, "{mean_err} {cov_err}");
    for node in fit.mixture.nodes() {
        assert!(node.cov().symmetric_eigenvalues().min() >= 1e-6 * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_is_permutation_equivariant(seed in any::<u64>(), shift in 1usize..20) {
        let cloud = sample_gaussian(&Gaussian::<f64>::standard(2), 20, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let rows: Vec<usize> = (0..20).map(|i| (i + shift) % 20).collect();
        let permuted = EnsembleCloud::new(cloud.particles().select_rows(&rows)).unwrap();
        let model = DuffingModel::default();
        let a = propagate_cloud(&cloud, &model, 0.5).unwrap();
        let b = propagate_cloud(&permuted, &model, 0.5).unwrap();
        prop_assert_eq!(a.particles().select_rows(&rows), b.particles().clone());
    }

    #[test]
    fn single_particle_matches_direct_integration(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
        let model = DuffingModel::default();
        let cloud = EnsembleCloud::new(DMatrix::from_row_slice(1, 2, &[x1, x2])).unwrap();
        let out = propagate_cloud(&cloud, &model, 1.0).unwrap();
        let direct = integrate_rk4(&DVector::from_vec(vec![x1, x2]), |x| duffing_rhs(&model, x), 0.01, 100).unwrap();
        prop_assert_eq!(out.particle(0), direct);
    }
}
